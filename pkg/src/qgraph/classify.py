"""Bifurcation classification from Yang's Theta quantities, and the
perturbation coefficients of the constant-branch bifurcations.

For the cubic nonlinearity G(phi) = 2 phi**3 we have G2 = 12 phi0 and G3 = 12.
Inverses of the singular operator L10 = L - lam0 - 6 phi0**2 are taken in the
M-orthogonal complement of the kernel through the bordered system
[[L10, ups], [ups^T M, 0]].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .continuation import _factor, null_vector
from .discretize import DiscreteSystem
from .graphs import GraphFunction, SymmetryOp, apply_symmetry
from .spectrum import fd_eigenmodes

ORTHO_TOL = 1e-8
INVERSE_TOL = 1e-8


class SolvabilityError(ValueError):
    """Right-hand side not orthogonal to the kernel."""


@dataclass(frozen=True, eq=False)
class ThetaSet:
    thetas: tuple[float, float, float, float, float]
    nullvec: GraphFunction
    lam0: float
    phi0: GraphFunction
    lam_min: float = 0.0
    notes: tuple[str, ...] = ()

    def __getitem__(self, j: int) -> float:
        """Theta_j for j = 1..5."""
        return self.thetas[j - 1]

    @property
    def Q0(self) -> float:
        return self.phi0.inner(self.phi0)


@dataclass(frozen=True)
class Classification:
    kind: str                  # saddle-node | transcritical | pitchfork | unresolved
    side: str = "n/a"          # "lam<=lam0" | "lam>=lam0" | "n/a"
    reason: str = ""
    # pitchfork side read off the reduced normal form (sign of Theta3*Theta5)
    normal_form_side: str = "n/a"


class KernelSolver:
    """Solve L10 x = rhs with <x, ups>_M = 0 once rhs is M-orthogonal to ups."""

    def __init__(self, sys: DiscreteSystem, u0: np.ndarray, lam0: float, ups: np.ndarray):
        self.sys, self.ups = sys, ups
        self.J = sys.jacobian(u0, lam0)
        col = sps.csr_matrix(ups[:, None])
        row = sps.csr_matrix((sys.weights * ups)[None, :])
        self._lu = _factor(sps.bmat([[self.J, col], [row, None]], format="csc"))

    def solve(self, rhs: np.ndarray, what: str = "rhs") -> np.ndarray:
        sys = self.sys
        nr = sys.norm(rhs)
        proj = sys.inner(rhs, self.ups)
        if abs(proj) > ORTHO_TOL * max(nr, 1.0):
            raise SolvabilityError(f"{what} has component {proj:.3e} along the kernel")
        z = self._lu.solve(np.r_[rhs, 0.0])
        x = z[:-1]
        res = float(np.max(np.abs(self.J @ x - rhs)))
        if res > INVERSE_TOL * max(1.0, float(np.max(np.abs(rhs)))):
            raise SolvabilityError(f"inverse residual {res:.2e} for {what}")
        return x


def compute_thetas(sys: DiscreteSystem, phi0, lam0: float) -> ThetaSet:
    """Theta_1..Theta_5 at a located branch point.

    Quantities whose inverse is not defined (kernel component in the
    right-hand side) are returned as NaN with a note; Theta_3, Theta_4 need
    Theta_1 = 0 and Theta_5 needs Theta_2 = 0.
    """
    u0 = sys._check(phi0)
    lmin, ups = null_vector(sys, u0, lam0)
    ip = sys.inner
    G2 = 12.0 * u0
    th1 = ip(u0, ups)
    th2 = ip(G2, ups ** 3)
    notes = []
    solver = KernelSolver(sys, u0, lam0, ups)
    try:
        w = solver.solve(u0, "phi0")
        th3 = ip(1.0 - G2 * w, ups ** 2)
        th4 = ip(G2 * w ** 2 - 2.0 * w, ups)
    except SolvabilityError as exc:
        th3 = th4 = math.nan
        notes.append(f"Theta3/Theta4 undefined: {exc}")
    try:
        r = G2 * ups ** 2
        th5 = ip(np.full_like(u0, 12.0), ups ** 4) - 3.0 * ip(r, solver.solve(r, "G2*ups^2"))
    except SolvabilityError as exc:
        th5 = math.nan
        notes.append(f"Theta5 undefined: {exc}")
    return ThetaSet((th1, th2, th3, th4, th5), sys.to_function(ups), float(lam0),
                    sys.to_function(u0), lmin, tuple(notes))


def classify(theta: ThetaSet, zero_tol: float | None = None) -> Classification:
    """Apply the three cases of Yang's theorem."""
    t1, t2, t3, t4, t5 = theta.thetas
    if zero_tol is None:
        zero_tol = 1e-6 * max(1.0, theta.Q0)
    return classify_values((t1, t2, t3, t4, t5), zero_tol)


def classify_values(thetas, zero_tol: float = 1e-6) -> Classification:
    t1, t2, t3, t4, t5 = thetas
    zero = lambda v: math.isfinite(v) and abs(v) <= zero_tol
    nonzero = lambda v: math.isfinite(v) and abs(v) > zero_tol

    def side(p):
        if nonzero(p):
            return "lam<=lam0" if p > 0 else "lam>=lam0"
        return "n/a"

    if nonzero(t1) and nonzero(t2):
        return Classification("saddle-node", side(t1 * t2), "case 1")
    if zero(t1) and nonzero(t2) and nonzero(t3):
        if math.isfinite(t4) and t3 * t3 > t2 * t4:
            return Classification("transcritical", "n/a", "case 2")
        return Classification("unresolved", "n/a", "Theta3^2 <= Theta2*Theta4")
    if zero(t1) and zero(t2) and nonzero(t3) and nonzero(t5):
        s = side(t3 * t4) if math.isfinite(t4) else "n/a"
        return Classification("pitchfork", s, "case 3", side(t3 * t5))
    return Classification("unresolved", "n/a", "no case hypotheses hold")


# ---------------------------------------------------------------------------
# constant-branch expansions


def _linear_mode(sys: DiscreteSystem, gamma: float, parity: str):
    """Discrete eigenpair of L nearest gamma**2 with the requested R2 parity.

    Returns (gamma_h, phi) with phi M-normalised.
    """
    R2 = SymmetryOp("R2")
    best = None
    for lam, f in fd_eigenmodes(sys, count=min(sys.size, 40)):
        r = apply_symmetry(R2, f)
        ok = r.allclose(f, 1e-6) if parity == "even" else r.allclose(-f, 1e-6)
        if ok and np.ptp(np.concatenate(f.values)) > 1e-8:
            if best is None or abs(lam - gamma ** 2) < abs(best[0] - gamma ** 2):
                best = (lam, f)
    if best is None:
        raise ValueError(f"no {parity} mode near gamma={gamma}")
    lam, f = best
    v = sys.from_function(f)
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return math.sqrt(lam), v / sys.norm(v)


@dataclass(frozen=True, eq=False)
class PitchforkExpansion:
    beta2: float
    phi2: GraphFunction
    gamma: float
    phi_odd: GraphFunction
    phi2_tilde: GraphFunction
    beta2_consistent: float = field(default=math.nan)


def pitchfork_coefficients(sys: DiscreteSystem, omega1: float) -> PitchforkExpansion:
    """Second-order pitchfork expansion at lam0 = -gamma**2/2 on the constant branch.

    ``beta2`` and ``phi2`` follow the printed expansion (L10 phi2~ = phi_odd**2,
    beta2 = 9 gamma**2 <phi_odd**2, phi2~>).  ``beta2_consistent`` is the value
    obtained by carrying the O(a**2) right-hand side 3*gamma*phi_odd**2 through
    the O(a**3) solvability condition: 9 gamma**2 <phi_odd**2, phi2~> + <phi_odd**4>.
    gamma is the discrete eigenvalue nearest omega1, so the kernel is exact on
    the grid.
    """
    gamma, v = _linear_mode(sys, omega1, "odd")
    u0 = np.full(sys.size, gamma / 2.0)
    lam0 = -gamma ** 2 / 2.0
    solver = KernelSolver(sys, u0, lam0, v)
    t = solver.solve(v ** 2, "phi_odd^2")
    ip = sys.inner
    beta2 = 9.0 * gamma ** 2 * ip(v ** 2, t)
    phi2 = t - beta2 / (2.0 * gamma)
    consistent = beta2 + ip(v ** 2, v ** 2)
    return PitchforkExpansion(beta2, sys.to_function(phi2), gamma, sys.to_function(v),
                              sys.to_function(t), consistent)


@dataclass(frozen=True, eq=False)
class TranscriticalExpansion:
    C: float
    beta1: float
    beta2: float
    gamma: float
    phi_even: GraphFunction
    phi2_tilde: GraphFunction
    beta2_consistent: float = field(default=math.nan)


def transcritical_coefficients(sys: DiscreteSystem, omega1: float) -> TranscriticalExpansion:
    """Transcritical expansion at lam0 = -gamma**2/2 on the constant branch.

    C = -(3/4) <phi_even**3>, beta1 = -2 gamma C and the printed
    beta2 = -4C**2 + <phi_even**4> + (3 gamma/2) <phi2~, phi_even**2>.
    ``beta2_consistent`` uses the factor 3 gamma that the O(a**3)
    solvability condition produces.
    """
    gamma, v = _linear_mode(sys, omega1, "even")
    u0 = np.full(sys.size, gamma / 2.0)
    lam0 = -gamma ** 2 / 2.0
    ip = sys.inner
    one = np.ones(sys.size)
    C = -0.75 * ip(one, v ** 3)
    solver = KernelSolver(sys, u0, lam0, v)
    t = solver.solve(gamma * (4.0 * C * v + 3.0 * v ** 2), "O(a^2) forcing")
    J = ip(t, v ** 2)
    q4 = ip(one, v ** 4)
    beta2 = -4.0 * C ** 2 + q4 + 1.5 * gamma * J
    consistent = -4.0 * C ** 2 + q4 + 3.0 * gamma * J
    return TranscriticalExpansion(C, -2.0 * gamma * C, beta2, gamma, sys.to_function(v),
                                  sys.to_function(t), consistent)
