"""Linear spectrum of the Kirchhoff Laplacian.

The dumbbell spectrum comes from the factored secular equation.  Any metric
graph can be handled by the finite-difference eigenproblem, which also serves
as an independent oracle for the secular roots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .discretize import DiscreteSystem, make_system
from .graphs import GraphFunction, MetricGraph

LOOP = "loop-localized"
FAMILIES = ("constant", "even", "odd", LOOP)
GRID_STEP = 1e-3
ROOT_TOL = 1e-12
DEDUP_TOL = 1e-9


@dataclass(frozen=True)
class LinearMode:
    k: float
    family: str
    multiplicity: int = 1
    resonant: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == LOOP and (abs(self.k - round(self.k)) > 1e-9 or self.multiplicity != 2):
            raise ValueError("loop-localized modes have integer k and multiplicity 2")
        if self.family == "constant" and self.k != 0:
            raise ValueError("the constant mode has k = 0")

    @property
    def lam(self) -> float:
        return self.k * self.k


def secular_factors(k, L: float):
    """(even, odd, loop) factors of the dumbbell secular equation."""
    k = np.asarray(k, dtype=float)
    f_even = np.sin(k * (L - np.pi)) - 3.0 * np.sin(k * (L + np.pi))
    f_odd = np.cos(k * (L - np.pi)) - 3.0 * np.cos(k * (L + np.pi))
    f_loop = np.sin(k * np.pi) ** 2
    if k.ndim == 0:
        return float(f_even), float(f_odd), float(f_loop)
    return f_even, f_odd, f_loop


def bond_scattering(g: MetricGraph):
    """Kirchhoff bond scattering matrix S and bond lengths for a metric graph.

    Bond 2m runs along edge m forwards, bond 2m+1 backwards.  S[b', b] is the
    amplitude scattered from bond b (arriving at a vertex) into bond b'
    (leaving it): 2/d - 1 for back-scattering and 2/d otherwise.
    """
    nb = 2 * len(g.edges)
    head = np.empty(nb, dtype=int)
    tail = np.empty(nb, dtype=int)
    lengths = np.empty(nb)
    for m, e in enumerate(g.edges):
        tail[2 * m], head[2 * m] = e.start, e.end
        tail[2 * m + 1], head[2 * m + 1] = e.end, e.start
        lengths[2 * m: 2 * m + 2] = e.length
    S = np.zeros((nb, nb))
    for b in range(nb):
        v = head[b]
        d = g.degree(v)
        for bp in np.flatnonzero(tail == v):
            S[bp, b] = 2.0 / d - (1.0 if bp == (b ^ 1) else 0.0)
    return S, lengths


def secular_determinant(k: float, L: float) -> complex:
    """det(I - S D(k)) for the dumbbell, used to cross-check the factored form."""
    from .graphs import build_dumbbell
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        S, lengths = bond_scattering(build_dumbbell(L))
    D = np.exp(1j * k * lengths)
    return complex(np.linalg.det(np.eye(S.shape[0]) - S * D[None, :]))


def _bracketed_roots(f, k_max: float, step: float = GRID_STEP) -> list[float]:
    ks = np.arange(step, k_max + step / 2, step)
    ks = ks[ks <= k_max]
    v = f(ks)
    roots = []
    exact = np.flatnonzero(v == 0)
    roots += list(ks[exact])
    s = np.sign(v)
    idx = np.flatnonzero(s[:-1] * s[1:] < 0)
    for i in idx:
        roots.append(brentq(f, ks[i], ks[i + 1], xtol=ROOT_TOL, rtol=4 * np.finfo(float).eps))
    return sorted(roots)


def find_modes(L: float, k_max: float) -> tuple[list[LinearMode], bool]:
    """All dumbbell modes with 0 <= k <= k_max, sorted by k.

    Returns ``(modes, resonant)``.  Coinciding roots from different families
    are reported separately and flagged.
    """
    if not k_max > 0:
        raise ValueError("k_max must be positive")
    if not L > 0:
        raise ValueError("L must be positive")
    even = _bracketed_roots(lambda k: secular_factors(k, L)[0], k_max)
    odd = _bracketed_roots(lambda k: secular_factors(k, L)[1], k_max)
    loop = _bracketed_roots(lambda k: np.sin(np.pi * k), k_max)
    loop = [float(round(k)) for k in loop]

    found = [(k, "even", 1) for k in even] + [(k, "odd", 1) for k in odd] + [(k, LOOP, 2) for k in loop]
    found.sort(key=lambda t: (t[0], FAMILIES.index(t[1])))
    resonant_ks = set()
    for (k1, f1, _), (k2, f2, _) in zip(found, found[1:]):
        if f1 != f2 and abs(k1 - k2) < DEDUP_TOL:
            resonant_ks.update((k1, k2))
    r = L / (math.pi / 2)
    resonant = bool(resonant_ks) or abs(r - round(r)) < 1e-9
    modes = [LinearMode(0.0, "constant", 1)]
    modes += [LinearMode(k, f, mult, k in resonant_ks) for k, f, mult in found]
    return modes, resonant


def first_mode(L: float, family: str, k_max: float = 10.0) -> float:
    modes, _ = find_modes(L, k_max)
    for m in modes:
        if m.family == family:
            return m.k
    raise ValueError(f"no {family} mode below k={k_max}")


def fd_eigenmodes(g: MetricGraph | DiscreteSystem, h: float = 0.05, count: int = 10,
                  min_intervals: int = 16) -> list[tuple[float, GraphFunction]]:
    """Lowest eigenpairs of the discretised Kirchhoff Laplacian.

    Eigenfunctions are normalised to unit L2 norm.
    """
    sys = g if isinstance(g, DiscreteSystem) else make_system(g, h, min_intervals)
    if min(sys.intervals) < 16:
        raise ValueError("each edge needs at least 16 intervals")
    count = min(count, sys.size)
    if sys.stencil == "ghost":
        lam, vec = _symmetric_modes(sys, count)
    else:
        lam, vec = _pencil_modes(sys, count)
    out = []
    for j in range(lam.size):
        v = vec[:, j] / sys.norm(vec[:, j])
        out.append((float(lam[j]), sys.to_function(v)))
    return out


def _symmetric_modes(sys: DiscreteSystem, count: int):
    # K v = lam M v with M diagonal: symmetrise with M^{-1/2}
    s = 1.0 / np.sqrt(sys.weights)
    B = sps.diags(s) @ sys.stiffness @ sps.diags(s)
    if sys.size <= 1500 or count >= sys.size // 2:
        lam, y = sla.eigh(B.toarray(), subset_by_index=[0, count - 1])
    else:
        lam, y = spla.eigsh(B.tocsc(), k=count, sigma=-1e-3, which="LM")
        order = np.argsort(lam)
        lam, y = lam[order], y[:, order]
    return lam, s[:, None] * y


def _pencil_modes(sys: DiscreteSystem, count: int):
    A = sys.operator.toarray()
    B = np.diag(sys.nonlinear_rows.astype(float))
    lam, vec = sla.eig(A, B)
    keep = np.isfinite(lam)
    lam, vec = lam[keep].real, vec[:, keep].real
    order = np.argsort(lam)[:count]
    return lam[order], vec[:, order]


def classify_fd_mode(phi: GraphFunction, tol: float = 1e-6) -> str:
    """Family of a dumbbell FD eigenfunction from its symmetry."""
    from .graphs import SymmetryOp, apply_symmetry

    e2 = phi.values[1]
    if np.max(np.abs(e2)) <= tol * max(1.0, phi.max_abs()):
        return LOOP
    r = apply_symmetry(SymmetryOp("R2"), phi)
    if r.allclose(phi, tol * phi.max_abs() * 10):
        return "constant" if np.ptp(np.concatenate(phi.values)) < tol else "even"
    if r.allclose(-phi, tol * phi.max_abs() * 10):
        return "odd"
    return "mixed"


# ---------------------------------------------------------------------------
# shrinking-loop limit


def rescaled_factors(k, eps: float):
    """Secular factors with loops of length eps and a bar of length pi."""
    k = np.asarray(k, dtype=float)
    a, b = k * (np.pi - eps) / 2.0, k * (np.pi + eps) / 2.0
    return np.sin(a) - 3.0 * np.sin(b), np.cos(a) - 3.0 * np.cos(b), np.sin(k * eps / 2.0) ** 2


def wavenumber_series(k0: float, eps: float) -> float:
    p = math.pi
    return k0 * (1 - 2 * eps / p + 4 * eps ** 2 / p ** 2 - 8 * eps ** 3 / p ** 3) + k0 ** 3 * eps ** 3 / (2 * p)


def epsilon_expansion_check(n: int, parity: str, eps: float) -> tuple[float, float]:
    """(exact root, truncated series) for the n-th even or odd mode."""
    if not 0 < eps <= 0.1:
        raise ValueError("eps must lie in (0, 0.1]")
    if parity == "even":
        k0, which = 2 * n, 0
    elif parity == "odd":
        k0, which = 2 * n - 1, 1
    else:
        raise ValueError("parity must be 'even' or 'odd'")
    f = lambda k: rescaled_factors(k, eps)[which]
    ks = wavenumber_series(k0, eps)
    width = 0.25
    lo, hi = ks - width, ks + width
    k_exact = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return k_exact, ks


def loop_wavenumber(n: int, eps: float) -> float:
    return 2 * n * math.pi / eps
