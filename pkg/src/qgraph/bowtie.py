"""The discrete self-trapping (DST) system on the five-vertex bowtie graph.

Covers the Hamiltonian in vertex and diagonal coordinates, the linear
stability of the constant state, the Poisson reduction of the fully symmetric
subspace to a sphere, and the closed-form branches of stationary states on
the subspace u1 = u2 = a, u3 = b, u4 = u5 = c, which solve

    a - b - a**3 - W a = 0
    -2a + 4b - 2c - b**3 - W b = 0
    -b + c - c**3 - W c = 0

with frequency W and power Q = 2a**2 + b**2 + 2c**2.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .graphs import build_bowtie, laplacian

SQ3 = math.sqrt(3.0)
THETA3_MAX = math.atan(3.0 * SQ3 / 5.0)
RESIDUAL_TOL = 1e-10

LAPLACIAN = laplacian(build_bowtie())
EIGENVALUES = np.array([0.0, 5.0, 1.0, 3.0, 3.0])
EIGENVECTORS = np.column_stack([
    np.ones(5) / math.sqrt(5.0),
    np.array([1, 1, -4, 1, 1]) / math.sqrt(20.0),
    np.array([-1, -1, 0, 1, 1]) / 2.0,
    np.array([1, -1, 0, 0, 0]) / math.sqrt(2.0),
    np.array([0, 0, 0, 1, -1]) / math.sqrt(2.0),
])


# ---------------------------------------------------------------------------
# Hamiltonians


def dst_hamiltonian(u) -> float:
    """H = conj(u)^T L u - 1/2 sum |u_n|^4."""
    u = np.asarray(u, dtype=complex)
    return float(np.real(np.conj(u) @ LAPLACIAN @ u) - 0.5 * np.sum(np.abs(u) ** 4))


def to_vertex(z) -> np.ndarray:
    """u = sum_j z_j v_j."""
    return EIGENVECTORS @ np.asarray(z, dtype=complex)


def to_diagonal(u) -> np.ndarray:
    return EIGENVECTORS.T @ np.asarray(u, dtype=complex)


def hamiltonian_diag(z) -> float:
    """The Hamiltonian written in the diagonal coordinates z1..z5."""
    z1, z2, z3, z4, z5 = np.asarray(z, dtype=complex)
    s5, s10 = math.sqrt(5.0), math.sqrt(10.0)
    quad = 5 * abs(z2) ** 2 + abs(z3) ** 2 + 3 * abs(z4) ** 2 + 3 * abs(z5) ** 2
    w = 2 * z1 + z2
    quart = (abs(z1 - 2 * z2) ** 4 / 50.0
             + (abs(w + s5 * z3 + s10 * z4) ** 4 + abs(w + s5 * z3 - s10 * z4) ** 4
                + abs(w - s5 * z3 + s10 * z5) ** 4 + abs(w - s5 * z3 - s10 * z5) ** 4) / 800.0)
    return float(quad - quart)


def hamiltonian_s1(z1: complex, z2: complex) -> float:
    """The Hamiltonian restricted to span{v1, v2}."""
    a1, a2 = abs(z1) ** 2, abs(z2) ** 2
    cross = (z1 ** 2 * np.conj(z2) ** 2 + np.conj(z1) ** 2 * z2 ** 2).real
    mix = (z1 * np.conj(z2) + np.conj(z1) * z2).real
    return float(5 * a2 - a1 ** 2 / 10 - (cross + 4 * a1 * a2) / 10 + 0.3 * a2 * mix - 13 * a2 ** 2 / 40)


def reduced_stability_eigs(R: float) -> tuple[tuple[complex, complex], tuple[complex, complex]]:
    """Eigenvalue pairs of the constant state linearised on S2 at power R."""
    if R < 0:
        raise ValueError("R must be nonnegative")
    l1 = cmath.sqrt(2 * R / 5 - 1)
    l2 = cmath.sqrt(2 * R - 25)
    return (l1, -l1), (l2, -l2)


# ---------------------------------------------------------------------------
# Poisson reduction of S1


@dataclass(frozen=True)
class SphereState:
    X: float
    Y: float
    Z: float
    R: float

    @classmethod
    def from_z(cls, z1: complex, z2: complex) -> "SphereState":
        w = 2 * np.conj(z1) * z2
        return cls(float(w.real), float(w.imag), abs(z1) ** 2 - abs(z2) ** 2, abs(z1) ** 2 + abs(z2) ** 2)

    def casimir_defect(self) -> float:
        return self.X ** 2 + self.Y ** 2 + self.Z ** 2 - self.R ** 2


def H_xyz(X, Y, Z, R):
    return (-2.5 * Z + 3 * R * X / 20 + 9 * R * Z / 80 - X ** 2 / 20 - 3 * X * Z / 20 + Y ** 2 / 20
            - Z ** 2 / 160 + (2.5 * R - 33 * R ** 2 / 160))


def poisson_field(s: SphereState) -> tuple[float, float, float]:
    X, Y, Z, R = s.X, s.Y, s.Z, s.R
    xd = (-9 * R + 12 * X + 9 * Z + 200) * Y / 80
    yd = (-12 * X ** 2 + 7 * X * Z + 12 * Z ** 2 + (9 * R - 200) * X - 12 * R * Z) / 80
    zd = (3 * R - 4 * X - 3 * Z) * Y / 20
    return xd, yd, zd


def integrate_poisson(s: SphereState, dt: float = 1e-3, horizon: float = 10.0) -> np.ndarray:
    """Classical RK4 for the reduced flow; rows are (X, Y, Z) samples."""
    R = s.R
    f = lambda v: np.array(poisson_field(SphereState(v[0], v[1], v[2], R)))
    v = np.array([s.X, s.Y, s.Z], dtype=float)
    n = int(round(horizon / dt))
    out = np.empty((n + 1, 3))
    out[0] = v
    for i in range(n):
        k1 = f(v)
        k2 = f(v + 0.5 * dt * k1)
        k3 = f(v + 0.5 * dt * k2)
        k4 = f(v + dt * k3)
        v = v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = v
    return out


# ---------------------------------------------------------------------------
# circle-hyperbola fixed points


def _xz_residuals(X, Z, R):
    return (X * X + Z * Z - R * R,
            -12 * X * X + 7 * X * Z + 12 * Z * Z + (9 * R - 200) * X - 12 * R * Z)


def fixed_point_quartic(R: float) -> np.ndarray:
    """Coefficients (highest first) of the quartic in X left after eliminating Z."""
    P = np.polynomial.polynomial
    circle = P.polymul([R * R, 0, -1], P.polymul([-12 * R, 7], [-12 * R, 7]))
    num = [-12 * R * R, -(9 * R - 200), 24]
    return P.polysub(circle, P.polymul(num, num))[::-1]


def circle_hyperbola_fixed_points(R: float, imag_tol: float = 1e-7) -> list[tuple[float, float]]:
    """Real intersections (X, Z) of the fixed-point circle and hyperbola, sorted by X."""
    if not R > 0:
        raise ValueError("R must be positive")
    coef = fixed_point_quartic(R)
    dcoef = np.polyder(coef)
    pts = []
    for x in np.roots(coef):
        if abs(x.imag) > imag_tol * max(1.0, R):
            continue
        X = float(x.real)
        for _ in range(3):
            d = np.polyval(dcoef, X)
            if d == 0:
                break
            step = np.polyval(coef, X) / d
            if abs(step) > 1e-6 * R:
                break
            X -= step
        if abs(X) > R * (1 + 1e-12):
            continue
        Z = (24 * X * X - (9 * R - 200) * X - 12 * R * R) / (7 * X - 12 * R)
        c, h = _xz_residuals(X, Z, R)
        if abs(c) <= 1e-9 * max(1.0, R * R) and abs(h) <= 1e-9 * max(1.0, R * R):
            pts.append((X, Z))
    pts.sort()
    merged = []
    for p in pts:
        if not merged or abs(p[0] - merged[-1][0]) + abs(p[1] - merged[-1][1]) > 1e-9 * R:
            merged.append(p)
    return merged


def threshold_R() -> float:
    """Closed form of the power at which the fixed-point count goes from 2 to 4."""
    c = 15.0 ** (2.0 / 3.0)
    r = math.sqrt(241 - 12 * c)
    return -13 - r + math.sqrt(482 + 12 * c + 7378 / r)


def detect_count_change(lo: float = 7.0, hi: float = 8.0, tol: float = 1e-11) -> float:
    """Bisection on the number of fixed points between lo (2) and hi (4)."""
    n_lo = len(circle_hyperbola_fixed_points(lo))
    n_hi = len(circle_hyperbola_fixed_points(hi))
    if n_lo == n_hi:
        raise ValueError("no change in the fixed-point count on the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if len(circle_hyperbola_fixed_points(mid)) == n_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# branches on S2


@dataclass(frozen=True)
class DstBranchPoint:
    branch_id: int
    theta: float          # nan for Branches 1 and 2 (parameterised by omega)
    a: float
    b: float
    c: float
    omega: float

    @property
    def Q(self) -> float:
        return 2 * self.a ** 2 + self.b ** 2 + 2 * self.c ** 2

    @property
    def mu(self) -> float:
        return math.sin(self.theta) ** 2

    def residual(self) -> float:
        return float(np.max(np.abs(abc_residual(self.a, self.b, self.c, self.omega))))


def abc_residual(a, b, c, w) -> np.ndarray:
    return np.array([a - b - a ** 3 - w * a,
                     -2 * a + 4 * b - 2 * c - b ** 3 - w * b,
                     -b + c - c ** 3 - w * c])


BRANCH_DOMAINS = {
    3: (0.0, THETA3_MAX),
    4: (math.pi / 3, 2 * math.pi / 3),
    5: (math.pi / 3, 2 * math.pi / 3),
    6: (math.pi / 3, 2 * math.pi / 3),
    7: (0.0, math.pi / 3),
}


def omega_34(theta):
    """W(theta) on the ellipse a**2 + a b + b**2 = 5 - W (Branches 3 and 4)."""
    return 5.0 - 1.5 * (3 * SQ3 * np.cos(theta) - 5 * np.sin(theta)) / np.sin(3 * theta)


def domega_34(theta):
    s3, c3 = np.sin(3 * theta), np.cos(3 * theta)
    g = 3 * SQ3 * np.cos(theta) - 5 * np.sin(theta)
    dg = -3 * SQ3 * np.sin(theta) - 5 * np.cos(theta)
    return -1.5 * (dg * s3 - 3 * g * c3) / s3 ** 2


def omega_5(theta):
    mu = np.sin(theta) ** 2
    return (4 * mu - 6) / (4 * mu - 3)


def cubic_coefficients(mu: float) -> tuple[float, float, float, float]:
    """Coefficients (highest first) of the cubic factor in W."""
    m = 4 * mu - 3
    return (4 * m * m * mu,
            -24 * (2 * mu - 1) * m * mu,
            3 * m * (16 * mu * mu - 4 * mu + 3),
            -64 * mu ** 3 + 48 * mu ** 2 - 36 * mu + 81)


def cubic_roots(mu: float) -> list[complex]:
    """Cardano roots of the cubic factor, each refined by Newton steps."""
    A, B, C, D = cubic_coefficients(mu)
    if A == 0:
        raise ValueError("degenerate cubic at mu = 3/4 or mu = 0")
    b, c, d = B / A, C / A, D / A
    p = c - b * b / 3
    q = 2 * b ** 3 / 27 - b * c / 3 + d
    disc = cmath.sqrt(q * q / 4 + p ** 3 / 27)
    u = (-q / 2 + disc) ** (1 / 3) if abs(-q / 2 + disc) >= abs(-q / 2 - disc) else (-q / 2 - disc) ** (1 / 3)
    omega_units = (1, complex(-0.5, SQ3 / 2), complex(-0.5, -SQ3 / 2))
    roots = []
    for w in omega_units:
        uk = u * w
        t = uk - p / (3 * uk) if uk != 0 else 0.0
        roots.append(t - b / 3)
    refined = []
    for r in roots:
        for _ in range(3):
            f = ((A * r + B) * r + C) * r + D
            df = (3 * A * r + 2 * B) * r + C
            if df == 0:
                break
            r = r - f / df
        refined.append(r)
    return refined


def relevant_cubic_root(mu: float, imag_tol: float = 1e-9) -> float | None:
    """The real root with W < 1 (the only physically relevant one), or None."""
    good = [r.real for r in cubic_roots(mu) if abs(r.imag) <= imag_tol * max(1.0, abs(r)) and r.real < 1]
    if not good:
        return None
    return min(good, key=lambda w: abs(w))  if len(good) > 1 else good[0]


def _ac_from_theta(theta, w, scale):
    r = 2 * math.sqrt(scale - w) / SQ3
    return r * math.sin(theta - math.pi / 3), r * math.sin(theta + math.pi / 3)


def branch_point(branch_id: int, param: float, check: bool = True) -> DstBranchPoint:
    """Closed-form point on Branch 1..7.

    Branches 1 and 2 take W; Branches 3-7 take theta in their open domain.
    """
    if branch_id == 1:
        if param > 0:
            raise ValueError("Branch 1 needs W <= 0")
        a = math.sqrt(-param)
        pt = DstBranchPoint(1, math.nan, a, a, a, float(param))
    elif branch_id == 2:
        if param > 1:
            raise ValueError("Branch 2 needs W <= 1")
        a = math.sqrt(1 - param)
        pt = DstBranchPoint(2, math.nan, a, 0.0, -a, float(param))
    elif branch_id in BRANCH_DOMAINS:
        lo, hi = BRANCH_DOMAINS[branch_id]
        theta = float(param)
        if not lo < theta < hi:
            raise ValueError(f"theta={theta} outside the domain ({lo}, {hi}) of Branch {branch_id}")
        if branch_id in (3, 4):
            w = float(omega_34(theta))
            if not w < 5:
                raise ValueError("W >= 5 is outside the ellipse")
            a, b = _ac_from_theta(theta, w, 5.0)
            pt = DstBranchPoint(branch_id, theta, a, b, a, w)
        else:
            mu = math.sin(theta) ** 2
            if branch_id == 5:
                w = float(omega_5(theta))
            else:
                w = relevant_cubic_root(mu)
                if w is None:
                    raise ValueError("no physically relevant root of the cubic")
            if not w < 1:
                raise ValueError("W >= 1 is physically irrelevant")
            a, c = _ac_from_theta(theta, w, 1.0)
            b = -2 * (1 - w) ** 1.5 * math.sin(3 * theta) / (3 * SQ3)
            pt = DstBranchPoint(branch_id, theta, a, b, c, w)
    else:
        raise ValueError(f"unknown branch {branch_id}")
    if check:
        scale = max(1.0, abs(pt.a), abs(pt.b), abs(pt.c)) ** 3
        if pt.residual() > RESIDUAL_TOL * scale:
            raise ArithmeticError(f"Branch {branch_id} point fails the stationary equations "
                                  f"(residual {pt.residual():.2e})")
    return pt


def sample_branch(branch_id: int, n: int = 400, margin: float = 1e-3, omega_range=(-6.0, 1.0)):
    """Points on one branch over its domain (theta grid or W grid)."""
    if branch_id in (1, 2):
        hi = 0.0 if branch_id == 1 else 1.0
        ws = np.linspace(omega_range[0], min(hi, omega_range[1]), n)
        return [branch_point(branch_id, w) for w in ws]
    lo, hi = BRANCH_DOMAINS[branch_id]
    out = []
    for t in np.linspace(lo + margin, hi - margin, n):
        try:
            p = branch_point(branch_id, t)
        except (ValueError, ArithmeticError):
            continue
        if omega_range[0] <= p.omega <= omega_range[1]:
            out.append(p)
    return out


# ---------------------------------------------------------------------------
# events


@dataclass(frozen=True)
class DstEvent:
    branches: tuple[int, int]
    omega: float
    Q: float
    kind: str
    theta: float


def _cubic_mu_derivative(w: float, mu: float, h: float = 1e-6) -> tuple[float, float]:
    P = lambda W, M: np.polyval(cubic_coefficients(M), W)
    dP_dmu = (P(w, mu + h) - P(w, mu - h)) / (2 * h)
    dP_dw = np.polyval(np.polyder(cubic_coefficients(mu)), w)
    return dP_dmu, dP_dw


def branch4_fold() -> DstBranchPoint:
    """Fold on the right-going half of Branch 4: dW/dtheta = 0 with theta in (pi/3, pi/2)."""
    grid = np.linspace(math.pi / 3 + 1e-3, math.pi / 2, 2001)
    d = domega_34(grid)
    i = int(np.flatnonzero(np.sign(d[:-1]) != np.sign(d[1:]))[0])
    t = brentq(domega_34, grid[i], grid[i + 1], xtol=1e-15)
    return branch_point(4, t)


def branch7_saddle_node() -> DstBranchPoint:
    """Extremum of W along Branch 7: dP/dmu = 0 on the cubic's relevant root."""
    def g(theta):
        mu = math.sin(theta) ** 2
        w = relevant_cubic_root(mu)
        return _cubic_mu_derivative(w, mu)[0]

    grid = np.linspace(1e-3, math.pi / 3 - 1e-3, 2001)
    vals = np.array([g(t) for t in grid])
    i = int(np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0])
    t = brentq(g, grid[i], grid[i + 1], xtol=1e-14)
    return branch_point(7, t)


def _contact(branch_id: int, gap, lo: float, hi: float) -> DstBranchPoint:
    grid = np.linspace(lo, hi, 1001)
    vals = np.array([gap(branch_point(branch_id, t)) for t in grid])
    i = int(np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0])
    t = brentq(lambda th: gap(branch_point(branch_id, th)), grid[i], grid[i + 1], xtol=1e-15)
    return branch_point(branch_id, t)


def dst_branch_events() -> list[DstEvent]:
    """Bifurcations among Branches 1-7, located by grid scans plus root finding."""
    out = []
    eps = 1e-3
    lo, hi = math.pi / 3 + eps, 2 * math.pi / 3 - eps
    # Branch 6 meets Branch 1 where a = c (and then b = a)
    p = _contact(6, lambda q: q.a - q.c, lo, hi)
    out.append(DstEvent((1, 6), p.omega, p.Q, "pitchfork", p.theta))
    # Branch 4 meets Branch 1 where a = b
    p = _contact(4, lambda q: q.a - q.b, lo, hi)
    out.append(DstEvent((1, 4), p.omega, p.Q, "transcritical", p.theta))
    p = branch4_fold()
    out.append(DstEvent((4, 4), p.omega, p.Q, "fold", p.theta))
    # Branch 5 meets Branch 4 where a = c
    p = _contact(5, lambda q: q.a - q.c, lo, hi)
    out.append(DstEvent((4, 5), p.omega, p.Q, "pitchfork", p.theta))
    p = branch7_saddle_node()
    out.append(DstEvent((7, 7), p.omega, p.Q, "saddle-node", p.theta))
    return out
