"""Combinatorial and metric graphs, sampled graph functions and symmetries.

Coordinates on a metric graph edge run from ``x0`` at the start vertex to
``x0 + length`` at the end vertex.  A loop is an edge whose two endpoints are
the same vertex.  The dumbbell uses the centred convention
``x1, x3 in (-pi, pi)`` on the loops and ``x2 in (-L, L)`` on the bar.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping, Sequence

import numpy as np

VERTEX_TOL = 1e-8


class ResonanceWarning(UserWarning):
    """Bar half-length is an integer multiple of pi/2: linear modes coincide."""


# ---------------------------------------------------------------------------
# combinatorial graphs


@dataclass(frozen=True)
class CombinatorialGraph:
    vertex_count: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        edges = tuple((int(i), int(j), float(w)) for i, j, w in self.edges)
        for i, j, w in edges:
            if i == j:
                raise ValueError(f"self-edge at vertex {i} is not allowed")
            if not (0 <= i < self.vertex_count and 0 <= j < self.vertex_count):
                raise ValueError(f"edge ({i}, {j}) out of range")
            if not w > 0:
                raise ValueError(f"edge weight must be positive, got {w}")
        object.__setattr__(self, "edges", edges)

    def incidence(self) -> np.ndarray:
        """N x M incidence matrix; edge m points from i to j."""
        E = np.zeros((self.vertex_count, len(self.edges)))
        for m, (i, j, _) in enumerate(self.edges):
            E[i, m] = -1.0
            E[j, m] = 1.0
        return E

    def degrees(self) -> np.ndarray:
        return np.diag(laplacian(self)).copy()


def laplacian(g: CombinatorialGraph) -> np.ndarray:
    """Return ``-Delta_Gamma = E W E^T`` (positive semidefinite)."""
    E = g.incidence()
    W = np.diag([w for _, _, w in g.edges])
    return E @ W @ E.T


def build_bowtie() -> CombinatorialGraph:
    """Two triangles sharing vertex 3 (index 2)."""
    edges = [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0), (2, 3, 1.0), (2, 4, 1.0), (3, 4, 1.0)]
    return CombinatorialGraph(5, tuple(edges))


# ---------------------------------------------------------------------------
# metric graphs


@dataclass(frozen=True)
class Edge:
    start: int
    end: int
    length: float
    x0: float = 0.0
    name: str = ""

    @property
    def is_loop(self) -> bool:
        return self.start == self.end

    @property
    def x1(self) -> float:
        return self.x0 + self.length


@dataclass(frozen=True)
class MetricGraph:
    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    markers: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "markers", MappingProxyType(dict(self.markers)))
        n = len(self.vertices)
        for e in self.edges:
            if not (e.length > 0 and math.isfinite(e.length)):
                raise ValueError(f"edge {e.name or e} must have positive finite length")
            if not (0 <= e.start < n and 0 <= e.end < n):
                raise ValueError(f"edge {e.name or e} references a missing vertex")

    @property
    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges))

    @property
    def family(self) -> str:
        return self.markers.get("family", "custom")

    def incident(self, v: int) -> list[tuple[int, int]]:
        """(edge index, end) pairs meeting vertex v; end 0 = start, 1 = end.

        A loop contributes both of its ends.
        """
        out = []
        for m, e in enumerate(self.edges):
            if e.start == v:
                out.append((m, 0))
            if e.end == v:
                out.append((m, 1))
        return out

    def degree(self, v: int) -> int:
        return len(self.incident(v))

    def edge_index(self, name: str) -> int:
        for m, e in enumerate(self.edges):
            if e.name == name:
                return m
        raise KeyError(name)

    @property
    def resonant(self) -> bool:
        return bool(self.markers.get("resonant", False))


def _is_resonant(L: float) -> bool:
    r = L / (math.pi / 2)
    return abs(r - round(r)) < 1e-9


def build_dumbbell(L: float) -> MetricGraph:
    """Two loops of length 2*pi joined by a bar of length 2L."""
    if not (L > 0 and math.isfinite(L)):
        raise ValueError(f"bar half-length must be positive, got {L}")
    resonant = _is_resonant(L)
    if resonant:
        warnings.warn(f"L={L} is a multiple of pi/2; loop and bar modes coincide",
                      ResonanceWarning, stacklevel=2)
    edges = (
        Edge(0, 0, 2 * math.pi, -math.pi, "e1"),
        Edge(0, 1, 2 * L, -L, "e2"),
        Edge(1, 1, 2 * math.pi, -math.pi, "e3"),
    )
    return MetricGraph(("v1", "v2"), edges,
                       {"family": "dumbbell", "L": float(L), "resonant": resonant})


def build_lollipop(L: float) -> MetricGraph:
    """The dumbbell with e3 removed; the free end of the bar is a Neumann leaf."""
    if not (L > 0 and math.isfinite(L)):
        raise ValueError(f"bar half-length must be positive, got {L}")
    edges = (
        Edge(0, 0, 2 * math.pi, -math.pi, "e1"),
        Edge(0, 1, 2 * L, -L, "e2"),
    )
    return MetricGraph(("v1", "v2"), edges,
                       {"family": "lollipop", "L": float(L), "neumann": (1,)})


def build_interval(length: float) -> MetricGraph:
    if not (length > 0 and math.isfinite(length)):
        raise ValueError(f"interval length must be positive, got {length}")
    return MetricGraph(("a", "b"), (Edge(0, 1, float(length), 0.0, "e"),),
                       {"family": "interval", "length": float(length), "neumann": (0, 1)})


def build_graph(name: str, L: float) -> MetricGraph:
    builders = {"dumbbell": build_dumbbell, "lollipop": build_lollipop,
                "interval": build_interval}
    try:
        return builders[name](L)
    except KeyError:
        raise ValueError(f"unknown graph {name!r}") from None


def graph_to_dict(g: MetricGraph) -> dict:
    return {
        "vertices": list(g.vertices),
        "edges": [{"from": e.start, "to": e.end, "length": e.length,
                   "loop": e.is_loop, "x0": e.x0, "name": e.name} for e in g.edges],
        "markers": {k: (list(v) if isinstance(v, tuple) else v) for k, v in g.markers.items()},
    }


def graph_from_dict(doc: Mapping) -> MetricGraph:
    vertices = doc["vertices"]
    if isinstance(vertices, int):
        vertices = [f"v{i + 1}" for i in range(vertices)]
    edges = []
    for m, d in enumerate(doc["edges"]):
        e = Edge(int(d["from"]), int(d["to"]), float(d["length"]),
                 float(d.get("x0", 0.0)), d.get("name", f"e{m + 1}"))
        if "loop" in d and bool(d["loop"]) != e.is_loop:
            raise ValueError(f"edge {e.name}: loop flag disagrees with endpoints")
        edges.append(e)
    markers = dict(doc.get("markers", {}))
    if "neumann" in markers:
        markers["neumann"] = tuple(markers["neumann"])
    return MetricGraph(tuple(vertices), tuple(edges), markers)


def graph_to_json(g: MetricGraph) -> str:
    return json.dumps(graph_to_dict(g), indent=2, sort_keys=True)


def graph_from_json(text: str) -> MetricGraph:
    return graph_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# sampled functions


def edge_grid(e: Edge, n: int) -> np.ndarray:
    return e.x0 + e.length * np.arange(n + 1) / n


def intervals_for(g: MetricGraph, h: float, min_intervals: int = 16) -> tuple[int, ...]:
    """Interval counts per edge giving spacing at most h."""
    return tuple(max(min_intervals, int(math.ceil(e.length / h - 1e-9))) for e in g.edges)


@dataclass(frozen=True, eq=False)
class GraphFunction:
    """Per-edge samples (endpoints included) on uniform grids."""

    graph: MetricGraph
    values: tuple[np.ndarray, ...]
    vertex_tol: float = VERTEX_TOL

    def __post_init__(self):
        if len(self.values) != len(self.graph.edges):
            raise ValueError("one sample array per edge is required")
        vals = []
        for v in self.values:
            a = np.array(v, dtype=float)
            if a.ndim != 1 or a.size < 2:
                raise ValueError("each edge needs at least two samples")
            a.setflags(write=False)
            vals.append(a)
        object.__setattr__(self, "values", tuple(vals))
        gap = self.vertex_mismatch()
        if gap > self.vertex_tol:
            raise ValueError(f"samples disagree at a vertex by {gap:.3e}")

    @classmethod
    def from_callables(cls, g: MetricGraph, funcs: Sequence, intervals: Sequence[int]):
        vals = []
        for e, f, n in zip(g.edges, funcs, intervals):
            x = edge_grid(e, n)
            vals.append(np.broadcast_to(f(x) if callable(f) else f, x.shape).astype(float))
        return cls(g, tuple(vals))

    @classmethod
    def zeros(cls, g: MetricGraph, intervals: Sequence[int]):
        return cls(g, tuple(np.zeros(n + 1) for n in intervals))

    @property
    def intervals(self) -> tuple[int, ...]:
        return tuple(v.size - 1 for v in self.values)

    def spacing(self, m: int) -> float:
        return self.graph.edges[m].length / (self.values[m].size - 1)

    def grid(self, m: int) -> np.ndarray:
        return edge_grid(self.graph.edges[m], self.values[m].size - 1)

    def vertex_values(self) -> list[list[float]]:
        out = []
        for v in range(len(self.graph.vertices)):
            out.append([self.values[m][0 if end == 0 else -1] for m, end in self.graph.incident(v)])
        return out

    def vertex_mismatch(self) -> float:
        gap = 0.0
        for vals in self.vertex_values():
            if vals:
                gap = max(gap, max(vals) - min(vals))
        return gap

    def with_values(self, values) -> "GraphFunction":
        return GraphFunction(self.graph, tuple(values), self.vertex_tol)

    def map(self, func) -> "GraphFunction":
        return self.with_values(func(v) for v in self.values)

    def __neg__(self):
        return self.map(np.negative)

    def __add__(self, other):
        if isinstance(other, GraphFunction):
            return self.with_values(a + b for a, b in zip(self.values, other.values))
        return self.map(lambda a: a + other)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, GraphFunction):
            return self.with_values(a * b for a, b in zip(self.values, other.values))
        return self.map(lambda a: a * other)

    __rmul__ = __mul__

    def __pow__(self, p):
        return self.map(lambda a: a ** p)

    def integrate(self) -> float:
        """Trapezoid rule over all edges."""
        return float(sum(np.trapezoid(v, dx=self.spacing(m)) for m, v in enumerate(self.values)))

    def inner(self, other: "GraphFunction") -> float:
        return (self * other).integrate()

    def norm(self, p: int = 2) -> float:
        return self.map(lambda a: np.abs(a) ** p).integrate() ** (1.0 / p)

    def h1_seminorm(self) -> float:
        s = 0.0
        for m, v in enumerate(self.values):
            s += float(np.sum(np.diff(v) ** 2) / self.spacing(m))
        return math.sqrt(s)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(v))) for v in self.values)

    def allclose(self, other: "GraphFunction", atol: float) -> bool:
        return all(np.allclose(a, b, rtol=0, atol=atol) for a, b in zip(self.values, other.values))


# ---------------------------------------------------------------------------
# symmetries

BOWTIE_PERMUTATIONS = {
    "R1": (1, 0, 2, 3, 4),
    "R2": (3, 4, 2, 0, 1),
    "R3": (0, 1, 2, 4, 3),
}


@dataclass(frozen=True)
class SymmetryOp:
    """A dumbbell reflection ("R1", "R2", "R3") or a vertex permutation."""

    kind: str
    permutation: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind in ("R1", "R2", "R3") and self.permutation is None:
            return
        if self.kind == "perm" and self.permutation is not None:
            p = tuple(int(i) for i in self.permutation)
            if sorted(p) != list(range(len(p))):
                raise ValueError("not a permutation")
            if any(p[p[i]] != i for i in range(len(p))):
                raise ValueError("permutation must be an involution")
            object.__setattr__(self, "permutation", p)
            return
        raise ValueError(f"unsupported symmetry {self.kind!r}")

    @classmethod
    def bowtie(cls, name: str) -> "SymmetryOp":
        return cls("perm", BOWTIE_PERMUTATIONS[name])


def apply_symmetry(op: SymmetryOp, f):
    """Apply a dumbbell reflection to a GraphFunction, or a permutation to a vector."""
    if op.kind == "perm":
        u = np.asarray(f)
        if u.shape[0] != len(op.permutation):
            raise ValueError("vector size does not match permutation")
        return u[list(op.permutation)]
    if not isinstance(f, GraphFunction) or f.graph.family != "dumbbell":
        raise ValueError(f"{op.kind} acts on dumbbell graph functions only")
    e1, e2, e3 = f.values
    if op.kind == "R1":
        vals = (e1[::-1], e2, e3)
    elif op.kind == "R3":
        vals = (e1, e2, e3[::-1])
    else:
        if e1.size != e3.size:
            raise ValueError("R2 needs matching grids on the two loops")
        vals = (e3, e2[::-1], e1)
    return f.with_values(np.array(v) for v in vals)
