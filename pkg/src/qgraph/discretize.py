"""Finite-difference discretisation of ``-phi'' - lam*phi - 2*phi**3 = 0`` on a metric graph.

Unknowns are the interior samples of every edge followed by one value per
vertex, so continuity holds by construction.  Interior rows use the centred
second difference.  Vertex rows come in two flavours:

``"ghost"`` (default)
    Centred ghost-point closure of the Kirchhoff flux condition.  Eliminating
    the ghost values gives a half-cell balance, so ``M @ J`` is symmetric with
    ``M`` the trapezoid weights.  Discrete inner products and the discrete
    Fredholm alternative then agree exactly.

``"one-sided"``
    The vertex row is the flux condition itself, written with second-order
    one-sided differences.  It carries no ``lam`` or cubic term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sps

from .graphs import GraphFunction, MetricGraph, edge_grid, intervals_for

DEFAULT_H = 0.05
MIN_INTERVALS = 64


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    graph: MetricGraph
    intervals: tuple[int, ...]
    stencil: str = "ghost"
    # derived
    size: int = field(init=False)
    n_interior: int = field(init=False)
    gather: tuple[np.ndarray, ...] = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    stiffness: sps.csr_matrix = field(init=False, repr=False)
    operator: sps.csr_matrix = field(init=False, repr=False)
    nonlinear_rows: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = self.graph
        if self.stencil not in ("ghost", "one-sided"):
            raise ValueError(f"unknown vertex stencil {self.stencil!r}")
        intervals = tuple(int(n) for n in self.intervals)
        if len(intervals) != len(g.edges) or min(intervals) < 2:
            raise ValueError("need at least two intervals on every edge")
        object.__setattr__(self, "intervals", intervals)

        n_int = sum(n - 1 for n in intervals)
        size = n_int + len(g.vertices)
        gather, offset = [], 0
        for e, n in zip(g.edges, intervals):
            idx = np.empty(n + 1, dtype=np.intp)
            idx[1:-1] = offset + np.arange(n - 1)
            idx[0] = n_int + e.start
            idx[-1] = n_int + e.end
            idx.setflags(write=False)
            gather.append(idx)
            offset += n - 1

        w = np.zeros(size)
        rows, cols, vals = [], [], []
        for e, n, idx in zip(g.edges, intervals, gather):
            h = e.length / n
            np.add.at(w, idx, np.r_[h / 2, np.full(n - 1, h), h / 2])
            p, q = idx[:-1], idx[1:]
            rows += [p, q, p, q]
            cols += [p, q, q, p]
            vals += [np.full(n, 1 / h)] * 2 + [np.full(n, -1 / h)] * 2
        K = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(size, size))
        K.sum_duplicates()
        A = sps.diags(1.0 / w) @ K
        nonlinear = np.ones(size, dtype=bool)
        if self.stencil == "one-sided":
            A = A.tolil()
            for v in range(len(g.vertices)):
                r = n_int + v
                A.rows[r], A.data[r] = [], []
                for m, end in g.incident(v):
                    idx, h = gather[m], g.edges[m].length / intervals[m]
                    near, nxt = (idx[1], idx[2]) if end == 0 else (idx[-2], idx[-3])
                    for c, coef in ((r, 1.5 / h), (near, -2.0 / h), (nxt, 0.5 / h)):
                        A[r, c] = A[r, c] + coef
            nonlinear[n_int:] = False
        w.setflags(write=False)
        nonlinear.setflags(write=False)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "n_interior", n_int)
        object.__setattr__(self, "gather", tuple(gather))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "stiffness", K)
        object.__setattr__(self, "operator", sps.csr_matrix(A))
        object.__setattr__(self, "nonlinear_rows", nonlinear)

    # -- layout --------------------------------------------------------------
    def spacing(self, m: int) -> float:
        return self.graph.edges[m].length / self.intervals[m]

    @property
    def h(self) -> float:
        return max(self.spacing(m) for m in range(len(self.intervals)))

    def to_function(self, u: np.ndarray) -> GraphFunction:
        u = self._check(u)
        return GraphFunction(self.graph, tuple(u[idx] for idx in self.gather))

    def from_function(self, f: GraphFunction) -> np.ndarray:
        """Layout vector from samples; resamples linearly if grids differ."""
        u = np.zeros(self.size)
        for m, (e, n, idx) in enumerate(zip(self.graph.edges, self.intervals, self.gather)):
            vals = f.values[m]
            if vals.size != n + 1:
                vals = np.interp(edge_grid(e, n), f.grid(m), vals)
            u[idx] = vals
        return u

    def sample(self, funcs: Sequence[Callable | float]) -> np.ndarray:
        """Layout vector from one callable (or constant) per edge.

        Vertex values are averaged over incident ends.
        """
        u = np.zeros(self.size)
        count = np.zeros(self.size)
        for e, n, idx, f in zip(self.graph.edges, self.intervals, self.gather, funcs):
            x = edge_grid(e, n)
            vals = np.broadcast_to(f(x) if callable(f) else f, x.shape)
            np.add.at(u, idx, vals)
            np.add.at(count, idx, 1.0)
        return u / count

    def grids(self) -> list[np.ndarray]:
        return [edge_grid(e, n) for e, n in zip(self.graph.edges, self.intervals)]

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.dot(self.weights * u, v))

    def norm(self, u: np.ndarray) -> float:
        return math.sqrt(self.inner(u, u))

    def _check(self, u) -> np.ndarray:
        if isinstance(u, GraphFunction):
            u = self.from_function(u)
        u = np.asarray(u, dtype=float)
        if u.shape != (self.size,):
            raise ValueError(f"vector of size {u.shape} does not match layout size {self.size}")
        return u

    # -- nonlinear map -------------------------------------------------------
    def residual(self, u, lam: float) -> np.ndarray:
        u = self._check(u)
        r = self.operator @ u
        r[self.nonlinear_rows] -= (lam * u + 2.0 * u ** 3)[self.nonlinear_rows]
        return r

    def jacobian(self, u, lam: float) -> sps.csr_matrix:
        u = self._check(u)
        d = np.where(self.nonlinear_rows, lam + 6.0 * u ** 2, 0.0)
        return sps.csr_matrix(self.operator - sps.diags(d))

    def d_lam(self, u) -> np.ndarray:
        """Derivative of the residual with respect to lam."""
        u = self._check(u)
        return np.where(self.nonlinear_rows, -u, 0.0)

    def linear_jacobian(self, lam: float) -> sps.csr_matrix:
        return self.jacobian(np.zeros(self.size), lam)


def make_system(graph: MetricGraph, h: float = DEFAULT_H, min_intervals: int = MIN_INTERVALS,
                stencil: str = "ghost") -> DiscreteSystem:
    """System with spacing at most h and at least ``min_intervals`` per edge."""
    return DiscreteSystem(graph, intervals_for(graph, h, min_intervals), stencil)


def residual(sys: DiscreteSystem, phi, lam: float) -> np.ndarray:
    return sys.residual(phi, lam)


def jacobian(sys: DiscreteSystem, phi, lam: float) -> sps.csr_matrix:
    return sys.jacobian(phi, lam)


def power(phi: GraphFunction) -> float:
    """Squared L2 norm by the trapezoid rule."""
    return phi.inner(phi)


def constant_solution(lam: float) -> float:
    if lam > 0:
        raise ValueError("constant solutions need lam <= 0")
    return math.sqrt(-lam / 2.0)


def snapshot_rows(phi: GraphFunction):
    """(edge_id, x, value) rows for CSV output."""
    for m, e in enumerate(phi.graph.edges):
        name = e.name or f"e{m + 1}"
        for x, v in zip(phi.grid(m), phi.values[m]):
            yield name, float(x), float(v)
