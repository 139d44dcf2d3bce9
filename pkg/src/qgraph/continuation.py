"""Newton solves, pseudo-arclength continuation and branch switching.

Solutions are carried internally as layout vectors of a DiscreteSystem and
exposed as GraphFunctions on BranchPoints.  The arclength metric combines the
trapezoid L2 inner product on the solution with the plain product on lam.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .discretize import DiscreteSystem, power
from .graphs import GraphFunction

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
DS_MIN, DS_MAX = 1e-5, 0.1
LAMBDA_MIN_TOL = 1e-8
KERNEL_TOL = 1e-6
EVENT_MERGE = 1e-4


class NewtonError(RuntimeError):
    """Newton's method failed."""


class SingularJacobianError(NewtonError):
    """The (bordered) Jacobian is numerically singular: likely a bifurcation point."""


class ConvergenceError(NewtonError):
    """No convergence within the iteration cap."""


class SwitchError(ValueError):
    """Branch switching refused at this point."""


@dataclass(frozen=True, eq=False)
class BranchPoint:
    lam: float
    Q: float
    solution: GraphFunction
    s: float = 0.0
    tags: frozenset = frozenset()
    tangent: tuple | None = field(default=None, repr=False)   # (t_u layout vector, t_lam)
    lam_min: float | None = None

    def with_tags(self, *tags: str) -> "BranchPoint":
        return BranchPoint(self.lam, self.Q, self.solution, self.s, self.tags | set(tags),
                           self.tangent, self.lam_min)


@dataclass(frozen=True, eq=False)
class Branch:
    points: tuple[BranchPoint, ...]
    origin: str
    events: tuple[BranchPoint, ...] = ()
    stop_reason: str = ""

    @property
    def lams(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    @property
    def Qs(self) -> np.ndarray:
        return np.array([p.Q for p in self.points])

    def all_points(self) -> list[BranchPoint]:
        """Regular points and events merged in arclength order."""
        return sorted(self.points + self.events, key=lambda p: p.s)

    def events_tagged(self, tag: str) -> list[BranchPoint]:
        return [p for p in self.events if tag in p.tags]


# ---------------------------------------------------------------------------
# linear algebra helpers


def _perm_parity(p: np.ndarray) -> int:
    seen = np.zeros(p.size, dtype=bool)
    parity = 1
    for i in range(p.size):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = p[j]
            length += 1
        if length % 2 == 0:
            parity = -parity
    return parity


def _factor(A: sps.spmatrix):
    try:
        lu = spla.splu(sps.csc_matrix(A))
    except RuntimeError as exc:
        raise SingularJacobianError(str(exc)) from exc
    d = np.abs(lu.U.diagonal())
    if not np.all(np.isfinite(d)) or d.min() <= 1e-14 * d.max():
        raise SingularJacobianError(f"pivot ratio {d.min() / d.max():.2e}")
    return lu


def _det_sign(lu) -> int:
    d = lu.U.diagonal()
    neg = int(np.count_nonzero(d < 0))
    return (-1 if neg % 2 else 1) * _perm_parity(lu.perm_r) * _perm_parity(lu.perm_c)


def _bordered(sys: DiscreteSystem, u, lam, t_u, t_l):
    J = sys.jacobian(u, lam)
    col = sps.csr_matrix(sys.d_lam(u)[:, None])
    row = sps.csr_matrix((sys.weights * t_u)[None, :])
    return sps.bmat([[J, col], [row, np.array([[t_l]])]], format="csc")


def _mnorm2(sys, t_u, t_l):
    return sys.inner(t_u, t_u) + t_l * t_l


# ---------------------------------------------------------------------------
# Newton


def newton_solve(sys: DiscreteSystem, guess, lam: float, tol: float = NEWTON_TOL,
                 max_iter: int = NEWTON_MAX_ITER, solver: str = "direct") -> GraphFunction:
    """Solve residual(phi, lam) = 0 at fixed lam.

    ``solver="iterative"`` uses MINRES on the symmetrised Jacobian (ghost
    stencil only) instead of a sparse LU.
    """
    u, _ = _newton(sys, sys._check(guess).copy(), lam, tol, max_iter, solver)
    return sys.to_function(u)


def _newton(sys, u, lam, tol, max_iter, solver="direct"):
    for it in range(max_iter + 1):
        F = sys.residual(u, lam)
        err = float(np.max(np.abs(F)))
        if not math.isfinite(err):
            raise ConvergenceError("residual is not finite")
        if err <= tol:
            return u, it
        if it == max_iter:
            break
        J = sys.jacobian(u, lam)
        if solver == "direct":
            du = _factor(J).solve(-F)
        elif solver == "iterative":
            if sys.stencil != "ghost":
                raise ValueError("the iterative solver needs the symmetric ghost stencil")
            S = sps.diags(sys.weights) @ J
            du, info = spla.minres(S, -sys.weights * F, rtol=1e-14, maxiter=20 * sys.size)
            if info != 0:
                raise ConvergenceError(f"MINRES failed (info={info})")
        else:
            raise ValueError(f"unknown solver {solver!r}")
        u = u + du
    raise ConvergenceError(f"no convergence in {max_iter} iterations (residual {err:.2e})")


def _correct(sys, u_pred, lam_pred, t_u, t_l, tol=NEWTON_TOL, max_iter=12):
    """Newton on (F, hyperplane through the prediction orthogonal to t)."""
    u, lam = u_pred.copy(), float(lam_pred)
    w_t = sys.weights * t_u
    for it in range(max_iter + 1):
        F = sys.residual(u, lam)
        N = float(np.dot(w_t, u - u_pred) + t_l * (lam - lam_pred))
        err = max(float(np.max(np.abs(F))), abs(N))
        if not math.isfinite(err):
            raise ConvergenceError("residual is not finite")
        if err <= tol:
            return u, lam, it
        if it == max_iter:
            break
        lu = _factor(_bordered(sys, u, lam, t_u, t_l))
        d = lu.solve(-np.r_[F, N])
        u = u + d[:-1]
        lam += float(d[-1])
    raise ConvergenceError(f"corrector stalled (residual {err:.2e})")


def tangent(sys: DiscreteSystem, u, lam, t_u, t_l):
    """Unit tangent at (u, lam) oriented along (t_u, t_l); also the bordered det sign."""
    lu = _factor(_bordered(sys, u, lam, t_u, t_l))
    z = lu.solve(np.r_[np.zeros(sys.size), 1.0])
    nz = math.sqrt(_mnorm2(sys, z[:-1], z[-1]))
    return z[:-1] / nz, float(z[-1]) / nz, _det_sign(lu)


def initial_tangent(sys: DiscreteSystem, u, lam, direction: float = -1.0):
    """Tangent at a seed with sign(t_lam) = sign(direction)."""
    lu = _factor(_bordered(sys, u, lam, np.zeros(sys.size), 1.0))
    z = lu.solve(np.r_[np.zeros(sys.size), 1.0])
    nz = math.sqrt(_mnorm2(sys, z[:-1], z[-1])) * (1.0 if direction >= 0 else -1.0)
    return z[:-1] / nz, float(z[-1]) / nz


# ---------------------------------------------------------------------------
# spectra along a branch


def nearest_eigs(sys: DiscreteSystem, u, lam: float, count: int = 3):
    """Jacobian eigenvalues nearest zero with M-normalised eigenvectors.

    With the ghost stencil these are eigenvalues of the symmetric pencil
    (M J, M), i.e. of the discrete L - lam - 6 phi**2.
    """
    count = min(count, sys.size - 2)
    J = sys.jacobian(u, lam)
    if sys.stencil == "ghost":
        s = 1.0 / np.sqrt(sys.weights)
        B = sps.diags(1.0 / s) @ J @ sps.diags(s)
        B = 0.5 * (B + B.T)
        try:
            ev, vec = spla.eigsh(B.tocsc(), k=count, sigma=1e-13, which="LM")
        except (RuntimeError, spla.ArpackError):
            ev, vec = sla.eigh(B.toarray())
        vec = s[:, None] * vec
    else:
        try:
            ev, vec = spla.eigs(J.tocsc(), k=count, sigma=1e-13, which="LM")
        except (RuntimeError, spla.ArpackError):
            ev, vec = sla.eig(J.toarray())
        ev, vec = ev.real, vec.real
    order = np.argsort(np.abs(ev))[:count]
    ev, vec = ev[order], vec[:, order]
    for j in range(vec.shape[1]):
        v = vec[:, j] / math.sqrt(sys.inner(vec[:, j], vec[:, j]))
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        vec[:, j] = v
    return ev, vec


def lam_min(sys, u, lam) -> float:
    return float(nearest_eigs(sys, u, lam, 1)[0][0])


# ---------------------------------------------------------------------------
# continuation


def _point(sys, u, lam, s, tags=(), t=None, lmin=None) -> BranchPoint:
    phi = sys.to_function(u)
    return BranchPoint(float(lam), power(phi), phi, float(s), frozenset(tags), t, lmin)


def seed_point(sys: DiscreteSystem, guess, lam: float, direction: float = -1.0,
               tol: float = NEWTON_TOL) -> BranchPoint:
    """Converge a guess and attach a tangent pointing towards sign(direction) in lam."""
    u, _ = _newton(sys, sys._check(guess).copy(), lam, tol, NEWTON_MAX_ITER)
    t = initial_tangent(sys, u, lam, direction)
    return _point(sys, u, lam, 0.0, ("start",), t)


def continue_branch(sys: DiscreteSystem, seed: BranchPoint, direction: float = -1.0,
                    lam_window: tuple[float, float] = (-3.0, 0.0), ds: float = 0.01,
                    ds_min: float = DS_MIN, ds_max: float = DS_MAX, max_steps: int = 5000,
                    origin: str = "", detect: bool = True, q_max: float = math.inf) -> Branch:
    """Pseudo-arclength continuation from a converged seed.

    If the seed carries a tangent it is used as is; otherwise the tangent is
    oriented so lam moves towards sign(direction).  Folds and branch points are
    located on the fly and returned in ``Branch.events``.
    """
    lo, hi = sorted(lam_window)
    u = sys.from_function(seed.solution)
    lam = seed.lam
    if float(np.max(np.abs(sys.residual(u, lam)))) > NEWTON_TOL:
        try:
            u, _ = _newton(sys, u, lam, NEWTON_TOL, NEWTON_MAX_ITER)
        except NewtonError as exc:
            raise NewtonError(f"seed does not converge: {exc}") from exc
    if seed.tangent is not None:
        t_u, t_l = seed.tangent
        t_u, t_l, sgn = tangent(sys, u, lam, np.asarray(t_u), t_l)
    else:
        t_u, t_l = initial_tangent(sys, u, lam, direction)
        _, _, sgn = tangent(sys, u, lam, t_u, t_l)
    s = seed.s
    points = [_point(sys, u, lam, s, seed.tags | {"start"}, (t_u, t_l))]
    events: list[BranchPoint] = []
    ds = float(min(max(ds, ds_min), ds_max))
    easy = 0
    stop = "max_steps"
    for _ in range(max_steps):
        try:
            u1, lam1, its = _correct(sys, u + ds * t_u, lam + ds * t_l, t_u, t_l)
            t1_u, t1_l, sgn1 = tangent(sys, u1, lam1, t_u, t_l)
        except NewtonError:
            ds *= 0.5
            easy = 0
            if ds < ds_min:
                stop = "step underflow"
                break
            continue
        step = ds
        if detect:
            if t1_l * t_l < 0:
                events.append(_locate_fold(sys, u, lam, t_u, t_l, s, step))
            if sgn1 != sgn:
                ev = _locate_branch_point(sys, u, lam, t_u, t_l, sgn, s, step)
                if ev is not None:
                    events.append(ev)
        u, lam, t_u, t_l, sgn = u1, lam1, t1_u, t1_l, sgn1
        s += step
        points.append(_point(sys, u, lam, s, (), (t_u, t_l)))
        if not lo <= lam <= hi:
            stop = "window exit"
            break
        if points[-1].Q > q_max:
            stop = "power limit"
            break
        easy = easy + 1 if its <= 3 else 0
        if easy >= 3:
            ds = min(ds * 1.3, ds_max)
            easy = 0
    events.sort(key=lambda p: (p.s, 0 if "fold" in p.tags else 1))
    return Branch(tuple(points), origin, tuple(events), stop)


def _locate_fold(sys, u0, lam0, t_u, t_l, s0, ds) -> BranchPoint:
    """Fold inside the step: quadratic model of lam(s), then secant on t_lam."""
    def probe(sig):
        u, lam, _ = _correct(sys, u0 + sig * t_u, lam0 + sig * t_l, t_u, t_l)
        tu, tl, _ = tangent(sys, u, lam, t_u, t_l)
        return u, lam, tu, tl

    a, fa = 0.0, t_l
    b = ds
    fb = probe(b)[3]
    best = None
    for _ in range(40):
        sig = a - fa * (b - a) / (fb - fa)
        if not 0.0 < sig < ds:
            sig = 0.5 * (a + b)
        u, lam, tu, tl = probe(sig)
        best = (sig, u, lam, tu, tl)
        if abs(tl) <= 1e-10 or abs(b - a) < 1e-13:
            break
        if (tl > 0) == (fa > 0):
            a, fa = sig, tl
        else:
            b, fb = sig, tl
    sig, u, lam, tu, tl = best
    return _point(sys, u, lam, s0 + sig, ("fold",), (tu, tl))


def _locate_branch_point(sys, u0, lam0, t_u, t_l, sgn0, s0, ds,
                         tol: float = LAMBDA_MIN_TOL) -> BranchPoint | None:
    """Branch point inside the step from the bordered determinant sign change.

    The signed quantity sign(det B) * |lam_min| is continuous and vanishes at
    the branch point, so a bracketing root finder drives |lam_min| below tol.
    """
    cache = {}

    def g(sig):
        u, lam, _ = _correct(sys, u0 + sig * t_u, lam0 + sig * t_l, t_u, t_l, tol=1e-11)
        _, _, sg = tangent(sys, u, lam, t_u, t_l) if sig > 0 else (None, None, sgn0)
        lm = abs(lam_min(sys, u, lam))
        cache[sig] = (u, lam, lm)
        return sg * lm

    try:
        a, fa = 0.0, g(0.0)
        b, fb = ds, g(ds)
        if fa * fb > 0:
            raise ValueError("no sign change of the determinant proxy")
        side = 0
        for _ in range(100):
            # Illinois variant of regula falsi
            sig = (a * fb - b * fa) / (fb - fa)
            if not a < sig < b:
                sig = 0.5 * (a + b)
            fs = g(sig)
            if abs(fs) <= 0.5 * tol or b - a < 1e-15:
                break
            if (fs > 0) == (fb > 0):
                b, fb = sig, fs
                if side == -1:
                    fa *= 0.5
                side = -1
            else:
                a, fa = sig, fs
                if side == 1:
                    fb *= 0.5
                side = 1
    except (NewtonError, ValueError) as exc:
        log.warning("branch point location failed: %s", exc)
        return None
    sig, (u, lam, lm) = min(cache.items(), key=lambda kv: kv[1][2])
    # the bordered matrix is singular at the polished point itself
    tu, tl, _ = tangent(sys, u, lam, t_u, t_l)
    try:
        u, lam = polish_branch_point(sys, u, lam)
        lm = abs(lam_min(sys, u, lam))
    except NewtonError as exc:
        log.info("branch point polish skipped: %s", exc)
    return _point(sys, u, lam, s0 + sig, ("branch_point",), (tu, tl), lm)


def polish_branch_point(sys: DiscreteSystem, u, lam: float, tol: float = 1e-12, max_iter: int = 20):
    """Refine a simple branch point with the regular extended system

        F(u, lam) + mu*phi = 0,  J phi = 0,  <phi, phi>_M = 1,  <phi, F_lam>_M = 0.

    Near a pitchfork the plain corrector leaves an arbitrary small kernel
    component in u; the last equation removes it.  Ghost stencil only.
    """
    if sys.stencil != "ghost":
        raise NewtonError("branch point polish needs the ghost stencil")
    u = np.array(u, dtype=float)
    _, vec = nearest_eigs(sys, u, lam, 1)
    phi = vec[:, 0]
    mu = 0.0
    n, w = sys.size, sys.weights
    for _ in range(max_iter):
        J = sys.jacobian(u, lam)
        r = np.r_[sys.residual(u, lam) + mu * phi, J @ phi,
                  sys.inner(phi, phi) - 1.0, sys.inner(phi, u)]
        if np.max(np.abs(r)) <= tol:
            break
        D = sps.bmat([
            [J, sps.csr_matrix(-u[:, None]), mu * sps.identity(n), sps.csr_matrix(phi[:, None])],
            [sps.diags(-12.0 * u * phi), sps.csr_matrix(-phi[:, None]), J, None],
            [None, None, sps.csr_matrix(2.0 * (w * phi)[None, :]), None],
            [sps.csr_matrix((w * phi)[None, :]), None, sps.csr_matrix((w * u)[None, :]), None],
        ], format="csc")
        d = _factor(D).solve(-r)
        u = u + d[:n]
        lam += float(d[n])
        phi = phi + d[n + 1: 2 * n + 1]
        mu += float(d[-1])
    else:
        raise ConvergenceError("extended branch-point system did not converge")
    if float(np.max(np.abs(sys.residual(u, lam)))) > NEWTON_TOL:
        raise ConvergenceError("polished point is not a solution")
    return u, lam


def detect_events(sys: DiscreteSystem, p0: BranchPoint, p1: BranchPoint) -> list[BranchPoint]:
    """Events between two consecutive converged points carrying tangents."""
    u0 = sys.from_function(p0.solution)
    u1 = sys.from_function(p1.solution)
    t_u, t_l = p0.tangent
    ds = p1.s - p0.s
    _, t1_l, sgn1 = tangent(sys, u1, p1.lam, t_u, t_l)
    _, _, sgn0 = tangent(sys, u0, p0.lam, t_u, t_l)
    out = []
    if t1_l * t_l < 0:
        out.append(_locate_fold(sys, u0, p0.lam, t_u, t_l, p0.s, ds))
    if sgn1 != sgn0:
        ev = _locate_branch_point(sys, u0, p0.lam, t_u, t_l, sgn0, p0.s, ds)
        if ev is not None:
            out.append(ev)
    return out


# ---------------------------------------------------------------------------
# branch switching


def null_vector(sys: DiscreteSystem, phi, lam: float, kernel_tol: float = KERNEL_TOL):
    """(lam_min, Upsilon) for a one-dimensional kernel; SwitchError otherwise."""
    u = sys._check(phi)
    ev, vec = nearest_eigs(sys, u, lam, 3)
    dim = int(np.count_nonzero(np.abs(ev) <= kernel_tol))
    if dim != 1:
        raise SwitchError(f"kernel dimension {dim} (nearest eigenvalues {np.array2string(ev, precision=3)})")
    return float(ev[0]), vec[:, 0]


def switch_branch(sys: DiscreteSystem, bp: BranchPoint, delta: float | None = None) -> list[BranchPoint]:
    """Seeds on the crossing branch, Phi0 +- delta*Upsilon, corrected on the
    hyperplane through the seed orthogonal to the old tangent.

    Each returned seed carries a tangent pointing away from the branch point.
    """
    if bp.tangent is None:
        raise SwitchError("branch point has no tangent")
    u0 = sys.from_function(bp.solution)
    _, ups = null_vector(sys, u0, bp.lam)
    t_u, t_l = bp.tangent
    t_u = np.asarray(t_u)
    if delta is None:
        n0 = sys.norm(u0)
        delta = 1e-2 * n0 if n0 > 0 else 1e-2
    seeds = []
    for sgn in (1.0, -1.0):
        pred = u0 + sgn * delta * ups
        u, lam, _ = _correct(sys, pred, bp.lam, t_u, t_l, max_iter=NEWTON_MAX_ITER)
        away = u - u0
        tu, tl, _ = tangent(sys, u, lam, sgn * ups, 0.0)
        if sys.inner(tu, away) + tl * (lam - bp.lam) < 0:
            tu, tl = -tu, -tl
        if sys.norm(u - u0) < 0.1 * delta:
            raise SwitchError("seed collapsed back onto the original branch")
        seeds.append(_point(sys, u, lam, 0.0, ("start",), (tu, tl)))
    return seeds
