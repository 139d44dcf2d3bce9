"""Jacobi elliptic functions and exact cnoidal / dnoidal edge waves.

Every function here takes the *modulus* k (not the parameter m = k**2).

The waves solve ``phi'' + lam*phi + 2*phi**3 = 0``:

* cn:  ``alpha * cn(beta*x - tau, kappa)`` with ``beta**2 = lam/(1 - 2 kappa**2)``
  and ``alpha**2 = kappa**2 * beta**2``; period ``4 K(kappa) / beta``.
* dn:  ``+-a * dn(b*x - tau, k)`` with ``a = b = sqrt(lam/(k**2 - 2))`` (lam < 0);
  period ``2 K(k) / b``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

SQRT_HALF = math.sqrt(0.5)
_EDGE = 1e-12


def agm(a, b, tol: float = 1e-16):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    for _ in range(64):
        if np.all(np.abs(a - b) <= tol * np.abs(a)):
            break
        a, b = 0.5 * (a + b), np.sqrt(a * b)
    return 0.5 * (a + b)


def _check_modulus(k):
    k = np.asarray(k, dtype=float)
    if np.any(k < 0) or np.any(k >= 1) or np.any(~np.isfinite(k)):
        raise ValueError("modulus must lie in [0, 1)")
    return k


def ellip_K(k):
    """Complete elliptic integral of the first kind, K(k) = pi / (2 AGM(1, k'))."""
    k = _check_modulus(k)
    K = np.pi / (2.0 * agm(1.0, np.sqrt((1.0 - k) * (1.0 + k))))
    return float(K) if K.ndim == 0 else K


def jacobi(x, k):
    """Return (sn, cn, dn) at x for modulus k, by descending Landen/AGM."""
    k = _check_modulus(k)
    x = np.asarray(x, dtype=float)
    x, k = np.broadcast_arrays(x, k)
    kp = np.sqrt((1.0 - k) * (1.0 + k))
    quarter = np.pi / (2.0 * agm(1.0, kp))
    # reduce into one period so the doubling below does not amplify roundoff
    x = x - 4.0 * quarter * np.round(x / (4.0 * quarter))

    a, b, c = np.ones_like(k), kp.copy(), k.copy()
    a_seq, c_seq = [a], [c]
    for _ in range(64):
        if np.all(np.abs(c) <= 1e-17 * np.abs(a)):
            break
        a, b, c = 0.5 * (a + b), np.sqrt(a * b), 0.5 * (a - b)
        a_seq.append(a)
        c_seq.append(c)
    n = len(a_seq) - 1
    phi = (2.0 ** n) * a_seq[n] * x
    for j in range(n, 0, -1):
        phi = 0.5 * (phi + np.arcsin(np.clip(c_seq[j] / a_seq[j] * np.sin(phi), -1.0, 1.0)))
    sn = np.sin(phi)
    cn = np.cos(phi)
    dn = np.sqrt(1.0 - (k * sn) ** 2)
    if sn.ndim == 0:
        return float(sn), float(cn), float(dn)
    return sn, cn, dn


# ---------------------------------------------------------------------------
# periods


def cn_period(lam: float, kappa: float) -> float:
    if abs(1.0 - 2.0 * kappa * kappa) < 1e-15:
        raise ValueError("kappa = 1/sqrt(2) is singular for lam != 0")
    ratio = (1.0 - 2.0 * kappa * kappa) / lam
    if ratio <= 0:
        raise ValueError("incompatible (lam, kappa) pair for a cnoidal wave")
    return 4.0 * ellip_K(kappa) * math.sqrt(ratio)


def dn_period(lam: float, k: float) -> float:
    if not lam < 0:
        raise ValueError("dnoidal waves need lam < 0")
    return 2.0 * ellip_K(k) * math.sqrt((k * k - 2.0) / lam)


# ---------------------------------------------------------------------------
# waves


@dataclass(frozen=True)
class EllipticWave:
    kind: str            # "cn" or "dn"
    amplitude: float     # alpha (cn) or a (dn), nonnegative
    wavenumber: float    # beta (cn) or b (dn)
    modulus: float       # kappa (cn) or k (dn)
    phase: float         # tau
    period: float
    lam: float
    sign: float = 1.0

    def _arg(self, x):
        return self.wavenumber * np.asarray(x, dtype=float) - self.phase

    def __call__(self, x):
        sn, cn, dn = jacobi(self._arg(x), self.modulus)
        base = cn if self.kind == "cn" else dn
        return self.sign * self.amplitude * base

    def derivative(self, x):
        sn, cn, dn = jacobi(self._arg(x), self.modulus)
        if self.kind == "cn":
            d = -sn * dn
        else:
            d = -self.modulus ** 2 * sn * cn
        return self.sign * self.amplitude * self.wavenumber * d

    def second_derivative(self, x):
        sn, cn, dn = jacobi(self._arg(x), self.modulus)
        m = self.modulus ** 2
        if self.kind == "cn":
            d2 = -cn * dn ** 2 + m * sn ** 2 * cn
        else:
            d2 = -m * dn * (cn ** 2 - sn ** 2)
        return self.sign * self.amplitude * self.wavenumber ** 2 * d2

    def residual(self, x):
        """phi'' + lam*phi + 2*phi**3 evaluated from closed-form derivatives."""
        phi = self(x)
        return self.second_derivative(x) + self.lam * phi + 2.0 * phi ** 3

    def energy(self, x):
        phi = self(x)
        return 0.5 * (self.derivative(x) ** 2 + self.lam * phi ** 2 + phi ** 4)

    @property
    def extremes(self) -> tuple[float, float]:
        """(min |phi|, max |phi|) along the orbit."""
        if self.kind == "cn":
            return 0.0, self.amplitude
        kp = math.sqrt((1.0 - self.modulus) * (1.0 + self.modulus))
        return self.amplitude * kp, self.amplitude

    def quarter(self) -> float:
        return ellip_K(self.modulus)

    def with_value_at(self, x: float, value: float, descending: bool = True) -> "EllipticWave":
        """Shift the phase so the wave takes ``value`` at ``x``.

        ``descending`` picks the branch on which |phi| decreases through x.
        Raises ValueError when the value lies outside the orbit.
        """
        if self.amplitude == 0:
            raise ValueError("zero-amplitude wave has a single value")
        K = self.quarter()
        lo, hi = self.extremes
        sign = self.sign
        if self.kind == "cn":
            r = value / self.amplitude
            if abs(r) > 1.0 + 1e-12:
                raise ValueError("value outside the cnoidal orbit")
            r = min(1.0, max(-1.0, r))
            u0 = _invert_monotone(lambda u: jacobi(u, self.modulus)[1], r, 0.0, 2.0 * K)
            sign = 1.0
        else:
            if value == 0 or abs(value) > hi * (1 + 1e-12) or abs(value) < lo * (1 - 1e-12):
                raise ValueError("value outside the dnoidal orbit")
            sign = math.copysign(1.0, value)
            r = min(1.0, max(lo / self.amplitude, abs(value) / self.amplitude))
            u0 = _invert_monotone(lambda u: jacobi(u, self.modulus)[2], r, 0.0, K)
        tau = self.wavenumber * x - (u0 if descending else -u0)
        return EllipticWave(self.kind, self.amplitude, self.wavenumber, self.modulus,
                            tau, self.period, self.lam, sign)


def _invert_monotone(f, target, lo, hi):
    """Solve f(u) = target for f decreasing on [lo, hi]."""
    flo, fhi = f(lo) - target, f(hi) - target
    if flo <= 0:
        return lo
    if fhi >= 0:
        return hi
    return brentq(lambda u: f(u) - target, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def cnoidal_wave(lam: float, kappa: float, tau: float = 0.0) -> EllipticWave:
    if not 0 <= kappa < 1:
        raise ValueError("modulus must lie in [0, 1)")
    if abs(kappa - SQRT_HALF) < 1e-15:
        raise ValueError("kappa = 1/sqrt(2) is singular")
    denom = 1.0 - 2.0 * kappa * kappa
    if lam == 0 or (lam > 0) != (denom > 0):
        raise ValueError("need lam > 0 with kappa < 1/sqrt(2), or lam < 0 with kappa > 1/sqrt(2)")
    beta = math.sqrt(lam / denom)
    alpha = kappa * beta
    return EllipticWave("cn", alpha, beta, kappa, tau, 4.0 * ellip_K(kappa) / beta, lam)


def dnoidal_wave(lam: float, k: float, tau: float = 0.0, sign: float = 1.0) -> EllipticWave:
    if not lam < 0:
        raise ValueError("dnoidal waves need lam < 0")
    if not 0 <= k < 1:
        raise ValueError("modulus must lie in [0, 1)")
    a = math.sqrt(lam / (k * k - 2.0))
    return EllipticWave("dn", a, a, k, tau, 2.0 * ellip_K(k) / a, lam, sign)


def _cn_by_wavenumber(lam: float, period: float) -> EllipticWave | None:
    """cn orbit found by solving for the wavenumber instead of the modulus.

    Used when the modulus lies closer to 1/sqrt(2) than the modulus bracket
    resolves, which happens for |lam| small against (2*pi/period)**2.
    """
    root = math.sqrt(abs(lam))
    # lam / b**2 written as a ratio of O(1) so tiny |lam| does not underflow
    kap = lambda b: math.sqrt(0.5 * (1.0 - math.copysign((root / b) ** 2, lam)))
    g = lambda b: 4.0 * ellip_K(kap(b)) / b - period
    lo = root * (1.0 + 1e-12)
    if not g(lo) > 0:
        return None
    hi = max(2.0 * lo, 16.0 / period)
    while g(hi) > 0:
        hi *= 2.0
    b = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    k = kap(b)
    return EllipticWave("cn", k * b, b, k, 0.0, 4.0 * ellip_K(k) / b, lam)


def wave_with_period(lam: float, period: float, kind: str) -> EllipticWave | None:
    """The cn or dn orbit of the given period at frequency lam, or None."""
    if not period > 0:
        raise ValueError("period must be positive")
    if kind == "cn":
        if lam == 0:
            # lam = 0 forces kappa = 1/sqrt(2); the period fixes the amplitude
            beta = 4.0 * ellip_K(SQRT_HALF) / period
            return EllipticWave("cn", beta * SQRT_HALF, beta, SQRT_HALF, 0.0, period, 0.0)
        if lam > 0:
            lo, hi = _EDGE, SQRT_HALF - _EDGE
        else:
            lo, hi = SQRT_HALF + _EDGE, 1.0 - _EDGE
        g = lambda kap: cn_period(lam, kap) - period
        make = lambda kap: cnoidal_wave(lam, kap)
    elif kind == "dn":
        if not lam < 0:
            return None
        lo, hi = _EDGE, 1.0 - _EDGE
        g = lambda kap: dn_period(lam, kap) - period
        make = lambda kap: dnoidal_wave(lam, kap)
    else:
        raise ValueError(f"unknown wave kind {kind!r}")
    glo, ghi = g(lo), g(hi)
    if glo == 0 or ghi == 0 or (glo > 0) == (ghi > 0):
        return _cn_by_wavenumber(lam, period) if kind == "cn" else None
    kap = brentq(g, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
    if kind == "cn" and abs(1.0 - 2.0 * kap * kap) < 1e-4:
        # beta = sqrt(lam / (1 - 2 kappa^2)) loses digits here
        return _cn_by_wavenumber(lam, period)
    return make(kap)


def quantize_loop(lam: float, n: int, kind: str) -> EllipticWave | None:
    """Wave with exactly n periods on a loop of length 2*pi, if one exists."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    return wave_with_period(lam, 2.0 * math.pi / n, kind)


def quantize_bar(lam: float, m: int, L: float, kind: str) -> EllipticWave | None:
    """Wave with exactly m half-periods on a bar of length 2L."""
    if m < 1:
        raise ValueError("m must be a positive integer")
    return wave_with_period(lam, 4.0 * L / m, kind)
