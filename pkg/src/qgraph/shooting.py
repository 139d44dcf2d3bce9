"""Standing waves of the dumbbell by shooting and by exact stitching.

Three kinds of solution are produced:

* two incomplete loops: roots q of the shooting function f(q, lam, L), which
  integrates the edge ODE from the centre of loop e1 through e2 to the centre
  of loop e3;
* two complete loops: labelled triples (n1, m, n3) assembled from quantised
  cnoidal / dnoidal waves;
* one of each ("hybrid"): a lollipop solution with a Neumann tip extended by a
  quantised complete loop on e3.

Every solution can be checked against the finite-difference discretisation
with :func:`fd_oracle`.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .continuation import (Branch, BranchPoint, NewtonError, _newton, continue_branch, nearest_eigs,
                           seed_point)
from .discretize import DiscreteSystem, make_system, power
from .elliptic import EllipticWave, quantize_bar, quantize_loop
from .graphs import (GraphFunction, MetricGraph, ResonanceWarning, SymmetryOp, apply_symmetry,
                     build_dumbbell, build_lollipop)

RTOL = ATOL = 1e-12
BLOWUP = 1e6
ROOT_TOL = 1e-10
SCAN_POINTS = 2000
SCAN_DX = 4e-3
REFINE_DEPTH = 8
HEAD_POINTS = 400
REFINE_TOL = 0.1
LAM = "Λ"          # label of a constant-valued edge


def _dumbbell(L):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResonanceWarning)
        return build_dumbbell(L)


def _rhs(lam):
    def f(x, y):
        return [y[1], -lam * y[0] - 2.0 * y[0] ** 3, y[0] ** 2]
    return f


def _blowup(x, y):
    return BLOWUP - abs(y[0])


_blowup.terminal = True


def _integrate(lam, x0, x1, phi, dphi, dense=True):
    sol = solve_ivp(_rhs(lam), (x0, x1), [phi, dphi, 0.0], method="DOP853", rtol=RTOL,
                    atol=ATOL, dense_output=dense, events=_blowup)
    if sol.status != 0 or sol.t[-1] != x1:
        return None, sol
    if dense:
        return sol.sol, sol
    end = sol.y[:, -1]
    return (lambda x, end=end: end), sol


# ---------------------------------------------------------------------------
# incomplete loops: the shooting function


@dataclass(frozen=True, eq=False)
class ShotResult:
    q: float
    f: float
    lam: float
    L: float
    Q: float
    segments: tuple = field(repr=False, default=())
    diverged: bool = False
    last_sign: float = 0.0

    def edge_callables(self) -> list[Callable]:
        """phi on e1, e2, e3 in the dumbbell edge coordinates."""
        s1, s2, s3 = self.segments
        return [lambda x: s1(np.abs(x))[0],
                lambda x: s2(x)[0],
                lambda x: s3(-np.abs(x))[0]]

    def function(self, sys: DiscreteSystem) -> GraphFunction:
        return sys.to_function(sys.sample(self.edge_callables()))

    @cached_property
    def trajectory(self) -> GraphFunction:
        return self.function(make_system(_dumbbell(self.L), 0.01))


def shoot(q: float, lam: float, L: float, dense: bool = True) -> ShotResult:
    """f(q, lam, L) = phi3'(0) from the three consecutive initial value problems.

    With ``dense=False`` the trajectory is not kept (faster, for root finding).
    """
    s1, r = _integrate(lam, 0.0, math.pi, q, 0.0, dense)
    if s1 is None:
        return ShotResult(q, math.nan, lam, L, math.nan, (), True, float(np.sign(r.y[0, -1])))
    p, dp, q1 = s1(math.pi)
    s2, r = _integrate(lam, -L, L, p, 2.0 * dp, dense)
    if s2 is None:
        return ShotResult(q, math.nan, lam, L, math.nan, (), True, float(np.sign(r.y[0, -1])))
    p, dp, q2 = s2(L)
    s3, r = _integrate(lam, -math.pi, 0.0, p, 0.5 * dp, dense)
    if s3 is None:
        return ShotResult(q, math.nan, lam, L, math.nan, (), True, float(np.sign(r.y[0, -1])))
    _, f, q3 = s3(0.0)
    return ShotResult(q, float(f), lam, L, float(2 * q1 + q2 + 2 * q3), (s1, s2, s3) if dense else ())


def _rk4(phi, dphi, lam, length, dx):
    n = max(1, int(math.ceil(length / dx)))
    h = length / n
    f = lambda p: -lam * p - 2.0 * p ** 3
    for _ in range(n):
        k1p, k1d = dphi, f(phi)
        k2p, k2d = dphi + 0.5 * h * k1d, f(phi + 0.5 * h * k1p)
        k3p, k3d = dphi + 0.5 * h * k2d, f(phi + 0.5 * h * k2p)
        k4p, k4d = dphi + h * k3d, f(phi + h * k3p)
        phi = phi + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        dphi = dphi + h / 6.0 * (k1d + 2 * k2d + 2 * k3d + k4d)
        np.clip(phi, -BLOWUP, BLOWUP, out=phi)
    return phi, dphi


def scan_shooting(qs, lam: float, L: float, dx: float = SCAN_DX, graph: str = "dumbbell") -> np.ndarray:
    """Shooting function on many q at once (fixed-step RK4).

    ``graph="lollipop"`` returns g = phi2'(L), the Neumann defect at the tip.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        phi = np.array(qs, dtype=float)
        dphi = np.zeros_like(phi)
        phi, dphi = _rk4(phi, dphi, lam, math.pi, dx)
        phi, dphi = _rk4(phi, 2.0 * dphi, lam, 2 * L, dx)
        if graph == "lollipop":
            out = dphi
        else:
            phi, dphi = _rk4(phi, 0.5 * dphi, lam, math.pi, dx)
            out = dphi
    out = np.where(np.abs(phi) >= BLOWUP, np.nan, out)
    return out


def _refine(qs, fs, lam, L, depth: int = REFINE_DEPTH, tol: float = REFINE_TOL):
    """Bisect cells where f is under-resolved on the scan grid.

    A cell is split when f at its midpoint departs from the linear
    interpolant by more than ``tol`` times the larger endpoint |f|; this
    exposes pairs of close roots that leave no sign change at the grid points.
    """
    qs, fs = np.asarray(qs, float), np.asarray(fs, float)
    todo = np.arange(qs.size - 1)
    for _ in range(depth):
        if todo.size == 0:
            break
        mid = 0.5 * (qs[todo] + qs[todo + 1])
        fm = scan_shooting(mid, lam, L)
        lin = 0.5 * (fs[todo] + fs[todo + 1])
        scale = np.maximum(np.abs(fs[todo]), np.abs(fs[todo + 1]))
        with np.errstate(invalid="ignore"):
            bad = np.abs(fm - lin) > tol * scale
        bad &= np.isfinite(fm) & np.isfinite(lin)
        order = np.argsort(todo)
        qs = np.insert(qs, todo + 1, mid)
        fs = np.insert(fs, todo + 1, fm)
        # cell j of the old grid became cells j + k and j + k + 1, with k insertions before it
        new_left = todo[order] + np.arange(todo.size)
        flagged = bad[order]
        todo = np.concatenate([new_left[flagged], new_left[flagged] + 1])
        todo.sort()
    return qs, fs


def _narrow(brackets, lam, L, points: int = 17):
    """Shrink every bracket by a factor points-1 with one batched scan, keeping
    the original bracket where the refined one would be unreliable."""
    if not brackets:
        return []
    grids = np.array([np.linspace(a, b, points) for a, b in brackets])
    f = scan_shooting(grids.ravel(), lam, L, dx=SCAN_DX / 2).reshape(grids.shape)
    out = []
    for (a, b), q, v in zip(brackets, grids, f):
        j = np.flatnonzero(v[:-1] * v[1:] <= 0)
        if j.size == 1:
            k = int(j[0])
            w = q[1] - q[0]
            out.append((max(a, q[k] - w), min(b, q[k + 1] + w)))
        else:
            out.append((a, b))
    return out


@dataclass(frozen=True)
class RootScan:
    roots: tuple[ShotResult, ...]
    gaps: tuple[tuple[float, float], ...]     # q intervals lost to divergent shots


def find_standing_waves(lam: float, L: float, q_range=(0.0, 1.3), grid: int = SCAN_POINTS,
                        include_endpoints: bool = False, refine: bool = True) -> RootScan:
    """All sign changes of f(., lam, L) on the grid, refined to |f| <= 1e-10.

    With ``refine`` the grid is locally bisected where f is under-resolved
    before looking for sign changes.
    """
    qs = np.linspace(q_range[0], q_range[1], grid)
    if q_range[0] == 0:
        # small q is amplified roughly by exp(sqrt(-lam) * total length), so
        # nonlinear roots can sit far below the first grid point
        head = np.geomspace(1e-14 * max(q_range[1], 1.0), qs[1], HEAD_POINTS, endpoint=False)
        qs = np.concatenate([qs[:1] if include_endpoints else [], head, qs[1:]])
    if not include_endpoints:
        qs = qs[:-1]
    fs = scan_shooting(qs, lam, L)
    if refine:
        qs, fs = _refine(qs, fs, lam, L)
    gaps = []
    bad = ~np.isfinite(fs)
    if bad.any():
        idx = np.flatnonzero(bad)
        gaps = [(float(qs[i]), float(qs[min(i + 1, qs.size - 1)])) for i in idx]
    exact = lambda q: shoot(q, lam, L, dense=False).f
    ok = np.isfinite(fs[:-1]) & np.isfinite(fs[1:])
    idx = np.flatnonzero(ok & (fs[:-1] * fs[1:] < 0))
    wide = [(qs[i], qs[i + 1]) for i in idx]
    brackets = _narrow(wide, lam, L)
    roots = [float(qs[i]) for i in np.flatnonzero(fs == 0)]
    for (a, b), (a0, b0) in zip(brackets, wide):
        for lo, hi in ((a, b), (a0, b0)):
            try:
                roots.append(brentq(exact, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200))
                break
            except ValueError:
                continue
    shots = [shoot(q, lam, L) for q in sorted(roots)]
    shots = [r for r in shots if abs(r.f) <= ROOT_TOL]
    return RootScan(tuple(shots), tuple(gaps))


# ---------------------------------------------------------------------------
# finite-difference oracle


@dataclass(frozen=True)
class OracleReport:
    h: float
    raw_residual: float       # residual of the projected exact solution, O(h**2)
    residual: float           # after Newton polishing on the grid
    correction: float         # max |polished - projected|
    Q: float                  # power of the polished grid solution

    @property
    def passed(self) -> bool:
        return self.residual <= 1e-8


def fd_oracle(graph: MetricGraph, funcs: Sequence[Callable], lam: float, h: float = 0.05,
              min_intervals: int = 64, vector: bool = False, tol: float = 1e-9):
    """Project per-edge callables onto the FD grid and Newton-polish them.

    A genuine solution has a projected residual of size O(h**2) and polishes
    with an O(h**2) correction to a grid solution with residual <= 1e-8.
    """
    sys = make_system(graph, h, min_intervals)
    u = sys.sample(funcs)
    raw = float(np.max(np.abs(sys.residual(u, lam))))
    try:
        v, _ = _newton(sys, u.copy(), lam, tol, 50)
    except NewtonError:
        rep = OracleReport(sys.h, raw, math.inf, math.inf, math.nan)
        return (rep, None, sys) if vector else rep
    rep = OracleReport(sys.h, raw, float(np.max(np.abs(sys.residual(v, lam)))),
                       float(np.max(np.abs(v - u))), power(sys.to_function(v)))
    return (rep, v, sys) if vector else rep


def richardson_power(graph: MetricGraph, funcs, lam: float, hs=(4e-3, 2e-3)) -> tuple[float, list[OracleReport]]:
    """Power of the polished FD solution extrapolated to h -> 0 (second order)."""
    reps = [fd_oracle(graph, funcs, lam, h, min_intervals=16) for h in hs]
    (h1, q1), (h2, q2) = [(r.h, r.Q) for r in reps]
    return q2 + (q2 - q1) * h2 ** 2 / (h1 ** 2 - h2 ** 2), reps


# ---------------------------------------------------------------------------
# complete loops


def _label_key(v) -> tuple:
    if v == LAM:
        return (1, 0)
    if v == 0:
        return (0, 0)
    return (2, v) if v > 0 else (3, -v)


@dataclass(frozen=True)
class SolutionTriple:
    n1: int | str
    m: int | str
    n3: int | str

    def __str__(self):
        return "(" + ",".join(str(v) for v in (self.n1, self.m, self.n3)) + ")"

    @classmethod
    def parse(cls, text: str) -> "SolutionTriple":
        parts = text.strip().strip("()").split(",")
        vals = [LAM if p.strip() in (LAM, "L", "lam", "Lambda") else int(p) for p in parts]
        return cls(*vals)

    def exists(self, lam: float, L: float) -> bool:
        """The existence inequalities for every edge label."""
        star = (math.pi / (2 * L)) ** 2
        ok = True
        for v, center in ((self.n1, False), (self.m, True), (self.n3, False)):
            if v == 0:
                continue
            if v == LAM:
                ok &= lam < 0
            elif v > 0:
                ok &= lam < (v * v * star if center else v * v)
            else:
                ok &= lam < (-v * v * star / 2 if center else -v * v / 2)
        return bool(ok)

    def swapped(self) -> "SolutionTriple":
        return SolutionTriple(self.n3, self.m, self.n1)

    def reversal_is_symmetry(self) -> bool:
        """False only for a dn centre with an odd number of half periods."""
        return not (isinstance(self.m, int) and self.m < 0 and (-self.m) % 2 == 1)

    def canonical(self) -> "SolutionTriple":
        if self.reversal_is_symmetry() and _label_key(self.n3) < _label_key(self.n1):
            return self.swapped()
        return self


@dataclass(frozen=True, eq=False)
class CompleteSolution:
    triple: SolutionTriple
    lam: float
    L: float
    edges: tuple        # (loop1, center, loop3): EllipticWave, or float constant

    def edge_callables(self) -> list[Callable]:
        out = []
        for e in self.edges:
            if isinstance(e, EllipticWave):
                out.append(e)
            else:
                out.append(lambda x, c=float(e): np.full_like(np.asarray(x, dtype=float), c))
        return out

    def function(self, sys: DiscreteSystem) -> GraphFunction:
        return sys.to_function(sys.sample(self.edge_callables()))

    def edge_energy(self, j: int) -> float:
        e = self.edges[j]
        if isinstance(e, EllipticWave):
            return float(e.energy(0.0))
        return 0.5 * (self.lam * e * e + e ** 4)


@lru_cache(maxsize=4096)
def _qloop(lam, n, kind):
    return quantize_loop(lam, n, kind)


@lru_cache(maxsize=4096)
def _qbar(lam, m, L, kind):
    return quantize_bar(lam, m, L, kind)


def _center_wave(m, lam, L):
    """Centre edge profile with zero slope at both ends, maximal at x = -L."""
    if m == 0:
        return 0.0
    if m == LAM:
        return math.sqrt(-lam / 2)
    kind = "cn" if m > 0 else "dn"
    w = _qbar(lam, abs(m), L, kind)
    if w is None:
        return None
    return EllipticWave(w.kind, w.amplitude, w.wavenumber, w.modulus, -w.wavenumber * L,
                        w.period, w.lam, w.sign)


def _loop_wave(n, lam, value, tol=1e-10):
    """Complete loop with n periods taking ``value`` at the vertex, or None."""
    if n == 0:
        return 0.0 if abs(value) <= tol else None
    if n == LAM:
        c = math.sqrt(-lam / 2) if lam < 0 else math.nan
        return math.copysign(c, value) if abs(abs(value) - c) <= tol else None
    kind = "cn" if n > 0 else "dn"
    w = _qloop(lam, abs(n), kind)
    if w is None:
        return None
    lo, hi = w.extremes
    if kind == "cn" and abs(value) > hi * (1 + 1e-12):
        return None
    if kind == "dn" and not (lo * (1 - 1e-12) <= abs(value) <= hi * (1 + 1e-12)):
        return None
    if kind == "dn" and value == 0:
        return None
    return w.with_value_at(math.pi, value)


def materialize(triple: SolutionTriple, lam: float, L: float) -> CompleteSolution | None:
    """Stitch quantised waves into a dumbbell solution, or None if the vertex
    values of the centre edge cannot be met by the loops."""
    if not triple.exists(lam, L):
        return None
    c = _center_wave(triple.m, lam, L)
    if c is None:
        return None
    if isinstance(c, EllipticWave):
        v0, v1 = float(c(-L)), float(c(L))
    else:
        v0 = v1 = float(c)
    w1 = _loop_wave(triple.n1, lam, v0)
    w3 = _loop_wave(triple.n3, lam, v1)
    if w1 is None or w3 is None:
        return None
    return CompleteSolution(triple, lam, L, (w1, c, w3))


def _labels(n_max):
    return [0, LAM] + list(range(1, n_max + 1)) + list(range(-1, -n_max - 1, -1))


def complete_candidates(lam: float, L: float, n_max: int = 2, m_max: int = 2) -> list[SolutionTriple]:
    """Triples allowed by the existence inequalities alone, one per orbit.

    Every bound has the form lam < threshold, so this set only grows as lam
    decreases.
    """
    if n_max < 1 or m_max < 1:
        raise ValueError("bounds must be at least 1")
    seen, out = set(), []
    for n1, m, n3 in itertools.product(_labels(n_max), _labels(m_max), _labels(n_max)):
        t = SolutionTriple(n1, m, n3).canonical()
        if t not in seen:
            seen.add(t)
            if t.exists(lam, L):
                out.append(t)
    return out


def enumerate_complete(lam: float, L: float, n_max: int = 2, m_max: int = 2) -> list[SolutionTriple]:
    """Candidates whose vertex values can actually be matched (materialisable).

    Matching can be lost as lam decreases: a cn loop whose amplitude drops
    below the vertex value of a dn centre leaves through a fold.
    """
    return [t for t in complete_candidates(lam, L, n_max, m_max) if materialize(t, lam, L) is not None]


def orbit_size(phi: GraphFunction, tol: float = 1e-8) -> int:
    """Number of distinct images under R1, R2, R3 and phi -> -phi."""
    ops = [SymmetryOp("R1"), SymmetryOp("R2"), SymmetryOp("R3")]
    images = [phi]
    frontier = [phi]
    while frontier:
        new = []
        for f in frontier:
            for g in [apply_symmetry(op, f) for op in ops] + [-f]:
                if not any(g.allclose(h, tol) for h in images):
                    images.append(g)
                    new.append(g)
        frontier = new
    return len(images)


@dataclass(frozen=True)
class ScheduleEntry:
    lam: float
    parent: SolutionTriple
    child: SolutionTriple
    rule: int


def complete_bifurcation_schedule(L: float, n_max: int = 2, m_max: int = 2) -> list[ScheduleEntry]:
    """Bifurcations among complete-loop solutions, ordered by decreasing lam.

    Rule 2 uses min(n1, n3) in the condition m < 2 L n / pi; rule 3 turns
    zero loops into constant ones; rule 4 needs oscillating loops, since a
    dnoidal centre cannot meet a constant loop away from the bifurcation.
    """
    T = SolutionTriple
    star = (math.pi / (2 * L)) ** 2
    out: list[ScheduleEntry] = []
    cn = range(1, n_max + 1)

    def add(lam, parent, child, rule):
        out.append(ScheduleEntry(float(lam), parent.canonical(), child.canonical(), rule))

    # 1: cn loops out of zero loops
    for n1 in cn:
        add(n1 * n1, T(0, 0, 0), T(n1, 0, n1), 1)
        add(n1 * n1, T(0, 0, 0), T(n1, 0, 0), 1)
        for n3 in range(n1 + 1, n_max + 1):
            add(n1 * n1, T(0, 0, n3), T(n1, 0, n3), 1)
    # 2: cn centre out of a zero centre
    for n1 in cn:
        for n3 in range(n1, n_max + 1):
            for m in range(1, m_max + 1):
                if m < 2 * L * min(n1, n3) / math.pi:
                    add(m * m * star, T(n1, 0, n3), T(n1, m, n3), 2)
    # 3: constant edges at lam = 0
    add(0.0, T(0, 0, 0), T(LAM, LAM, LAM), 3)
    pairs = [(a, b) for a in [0] + list(cn) for b in [0] + list(cn) if _label_key(a) <= _label_key(b)]
    for a, b in pairs:
        if (a, b) == (0, 0):
            continue
        add(0.0, T(a, 0, b), T(a if a else LAM, LAM, b if b else LAM), 3)
    # 4: dn centre out of a constant centre
    loops = list(cn) + [-n for n in cn]
    for m in range(1, m_max + 1):
        lam_ev = -m * m * star / 2
        for a in loops:
            for b in loops:
                parent = T(a, LAM, b)
                if not parent.exists(lam_ev, L):
                    continue
                child = T(a, -m, b)
                if m % 2 == 0 and _label_key(b) < _label_key(a):
                    continue
                add(lam_ev, parent, child, 4)
    # 5: dn loops out of constant loops
    for n1 in cn:
        lam_ev = -n1 * n1 / 2
        add(lam_ev, T(LAM, LAM, LAM), T(-n1, LAM, -n1), 5)
        add(lam_ev, T(LAM, LAM, LAM), T(-n1, LAM, LAM), 5)
        for n3 in list(cn) + [-k for k in range(1, n1)]:
            add(lam_ev, T(LAM, LAM, n3), T(-n1, LAM, n3), 5)
    uniq = {}
    for e in out:
        uniq.setdefault((e.lam, e.parent, e.child), e)
    return sorted(uniq.values(), key=lambda e: (-e.lam, e.rule, str(e.child)))


# ---------------------------------------------------------------------------
# hybrids: lollipop + complete loop


def lollipop_shot(q: float, lam: float, L: float):
    """(g, v, segments) with g = phi2'(L) the Neumann defect and v = phi2(L)."""
    s1, _ = _integrate(lam, 0.0, math.pi, q, 0.0)
    if s1 is None:
        return math.nan, math.nan, None
    p, dp, _ = s1(math.pi)
    s2, _ = _integrate(lam, -L, L, p, 2.0 * dp)
    if s2 is None:
        return math.nan, math.nan, None
    v, g, _ = s2(L)
    return float(g), float(v), (s1, s2)


def _band(lam, n, kind):
    """(lo, hi) admissible |v| for a quantised loop wave on e3, or None."""
    w = _qloop(lam, n, kind)
    if w is None:
        return None
    lo, hi = w.extremes
    return (0.0, hi) if kind == "cn" else (lo, hi)


def _band_defect(lam, v, n, kind) -> float:
    """Positive inside the admissible band, zero on its edge."""
    b = _band(lam, n, kind)
    if b is None:
        return -1.0
    lo, hi = b
    return min(abs(v) - lo, hi - abs(v)) if kind == "dn" else hi - abs(v)


def _tip_value(sys_l: DiscreteSystem, u) -> float:
    return float(sys_l.to_function(u).values[1][-1])


def _lollipop(L):
    return build_lollipop(L)


def _lollipop_seeds(sys, lam, L, q_range, grid):
    """(q, grid vector) for each nontrivial lollipop shooting root at lam."""
    qs = np.linspace(q_range[0], q_range[1], grid)[1:]
    g = scan_shooting(qs, lam, L, graph="lollipop")
    out = []
    for i in np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0):
        f = lambda q: lollipop_shot(q, lam, L)[0]
        try:
            q = brentq(f, qs[i], qs[i + 1], xtol=1e-14)
        except ValueError:
            continue
        if abs(q) < 1e-6 or (lam < 0 and abs(q - math.sqrt(-lam / 2)) < 1e-6):
            continue
        _, _, (s1, s2) = lollipop_shot(q, lam, L)
        out.append((float(q), sys.sample([lambda x: s1(np.abs(x))[0], lambda x: s2(x)[0]])))
    return out


def lollipop_branches(lam_window, L: float, h: float = 0.05, seed_lam: float | None = None,
                      q_range=(0.0, 1.5), grid: int = 600, ds: float = 0.02) -> list[Branch]:
    """Nontrivial lollipop branches: shooting roots at seed_lam continued in lam
    on the finite-difference lollipop, one Branch per solution curve."""
    lo, hi = sorted(lam_window)
    if seed_lam is None:
        seed_lam = 0.5 * (lo + hi)
    sys = make_system(_lollipop(L), h)
    seeds = [u for _, u in _lollipop_seeds(sys, seed_lam, L, q_range, grid)]
    out: list[Branch] = []
    for guess in seeds:
        try:
            seed = seed_point(sys, guess, seed_lam)
        except NewtonError:
            continue
        u0 = sys.from_function(seed.solution)
        if any(_passes_through(sys, b, u0, seed_lam) for b in out):
            continue
        halves = []
        for direction in (-1.0, 1.0):
            sd = seed if direction < 0 else seed_point(sys, u0, seed_lam, 1.0)
            halves.append(continue_branch(sys, sd, direction, (lo, hi), ds=ds, detect=False,
                                          origin="lollipop"))
        pts = list(halves[0].points[::-1]) + list(halves[1].points[1:])
        pts = [p for p in pts if lo <= p.lam <= hi]
        out.append(Branch(tuple(pts), f"lollipop branch through q={seed.solution.values[0][len(seed.solution.values[0]) // 2]:.6f}"))
    return out


def _passes_through(sys, branch, u0, lam0, tol=1e-2) -> bool:
    pts = branch.points
    scale = max(1.0, float(np.max(np.abs(u0))))
    for a, b in zip(pts, pts[1:]):
        if (a.lam - lam0) * (b.lam - lam0) <= 0 and a.lam != b.lam:
            t = (lam0 - a.lam) / (b.lam - a.lam)
            u = (1 - t) * sys.from_function(a.solution) + t * sys.from_function(b.solution)
            if float(np.max(np.abs(u - u0))) < tol * scale:
                return True
    return False


def stitch(sys_d: DiscreteSystem, phi_l: GraphFunction, lam: float, n: int, kind: str,
           descending: bool = True):
    """Dumbbell layout vector: lollipop values on e1, e2 and a quantised loop on e3."""
    v = float(phi_l.values[1][-1])
    w = _qloop(lam, n, kind)
    if w is None:
        return None
    try:
        w = w.with_value_at(-math.pi, v, descending)
    except ValueError:
        return None
    a1, a2 = phi_l.values
    return sys_d.sample([lambda x: a1, lambda x: a2, w])


def _runs(mask):
    i, n = 0, len(mask)
    while i < n:
        if mask[i]:
            j = i
            while j < n and mask[j]:
                j += 1
            yield i, j
            i = j
        else:
            i += 1


def _band_edge(sys_l, p_in: BranchPoint, p_out: BranchPoint, n, kind):
    """Lollipop solution where the tip value meets the band edge (secant on lam)."""
    u_a, u_b = sys_l.from_function(p_in.solution), sys_l.from_function(p_out.solution)
    la, lb = p_in.lam, p_out.lam

    def at(t):
        lam = (1 - t) * la + t * lb
        u, _ = _newton(sys_l, (1 - t) * u_a + t * u_b, lam, 1e-11, 30)
        return lam, u, _band_defect(lam, _tip_value(sys_l, u), n, kind)

    t0, t1 = 0.0, 1.0
    d0, d1 = at(t0)[2], at(t1)[2]
    if not (d0 > 0 and d1 <= 0):
        return None
    for _ in range(60):
        tm = t1 - d1 * (t1 - t0) / (d1 - d0) if d1 != d0 else 0.5 * (t0 + t1)
        if not t0 < tm < t1:
            tm = 0.5 * (t0 + t1)
        lam, u, dm = at(tm)
        if abs(dm) < 1e-12 or t1 - t0 < 1e-13:
            return lam, u
        if dm > 0:
            t0, d0 = tm, dm
        else:
            t1, d1 = tm, dm
    return lam, u


def hybrid_waves(lam_window, L: float, n_max: int = 2, h: float = 0.05, kinds=("cn", "dn"),
                 seed_lam: float | None = None, q_range=(0.0, 1.5)) -> list[Branch]:
    """Hybrid branches: admissible stretches of lollipop branches, each traversed
    once with the descending and once with the ascending phase on e3.

    Band edges, where the two phases meet, are located and stored as fold
    events.
    """
    sys_l = make_system(_lollipop(L), h)
    sys_d = make_system(_dumbbell(L), h)
    out = []
    for bi, lb in enumerate(lollipop_branches(lam_window, L, h, seed_lam, q_range)):
        pts = lb.points
        vs = [float(p.solution.values[1][-1]) for p in pts]
        for kind in kinds:
            for n in range(1, n_max + 1):
                ok = np.array([_band_defect(p.lam, v, n, kind) > 0 for p, v in zip(pts, vs)])
                for start, stop in _runs(ok):
                    hp, s = [], 0.0
                    for desc in (True, False):
                        run = pts[start:stop] if desc else pts[start:stop][::-1]
                        for p in run:
                            u = stitch(sys_d, p.solution, p.lam, n, kind, desc)
                            if u is not None:
                                phi = sys_d.to_function(u)
                                hp.append(BranchPoint(p.lam, power(phi), phi, s, frozenset()))
                                s += 1.0
                    events = []
                    for i_in, i_out in ((start, start - 1), (stop - 1, stop)):
                        if 0 <= i_out < len(pts):
                            edge = _band_edge(sys_l, pts[i_in], pts[i_out], n, kind)
                            if edge is None:
                                continue
                            lam, u = edge
                            ud = stitch(sys_d, sys_l.to_function(u), lam, n, kind, True)
                            if ud is not None:
                                phi = sys_d.to_function(ud)
                                events.append(BranchPoint(float(lam), power(phi), phi, math.nan,
                                                          frozenset({"fold"})))
                    if hp:
                        out.append(Branch(tuple(hp), f"{lb.origin} + {kind} n={n} on e3",
                                          tuple(events)))
    return out


@dataclass(frozen=True, eq=False)
class HybridRecord:
    q: float
    n: int
    kind: str
    descending: bool
    solution: GraphFunction

    @property
    def label(self) -> str:
        return f"q={self.q:.10f} {self.kind}{self.n} {'desc' if self.descending else 'asc'}"


def hybrid_solutions_at(lam: float, L: float, n_max: int = 2, h: float = 0.05,
                        kinds=("cn", "dn"), q_range=(0.0, 1.5), grid: int = 600) -> list[HybridRecord]:
    """All hybrids at one lam: lollipop roots times admissible e3 waves and phases."""
    sys_l = make_system(_lollipop(L), h)
    sys_d = make_system(_dumbbell(L), h)
    out = []
    for q, guess in _lollipop_seeds(sys_l, lam, L, q_range, grid):
        try:
            u, _ = _newton(sys_l, guess, lam, 1e-10, 50)
        except NewtonError:
            continue
        phi_l = sys_l.to_function(u)
        for kind in kinds:
            for n in range(1, n_max + 1):
                for desc in (True, False):
                    ud = stitch(sys_d, phi_l, lam, n, kind, desc)
                    if ud is not None:
                        out.append(HybridRecord(q, n, kind, desc, sys_d.to_function(ud)))
    return out


def jacobian_lam_min(sys: DiscreteSystem, funcs, lam: float) -> float:
    """Smallest |eigenvalue| of the FD Jacobian at the polished grid solution."""
    rep, v, s = fd_oracle(sys.graph, funcs, lam, sys.h, vector=True)
    if v is None:
        return math.nan
    return float(abs(nearest_eigs(s, v, lam, 1)[0][0]))
