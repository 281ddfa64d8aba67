"""Covariance machinery of filtered self-similar processes and its constants.

Everything here is an exact finite sum or a one-dimensional integral.  The
filtered covariances are written through the autocorrelation of the filter,
``a_d = sum_{q - r = d} alpha_q alpha_r``, which turns every double sum over
``(q, r)`` into a single sum over the lag ``d``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import sqrt

import mpmath
import numpy as np
from scipy import integrate, special

from .filters import Filter, partial_sums

__all__ = [
    "CovarianceTable",
    "HurstParam",
    "autocorrelation",
    "c2",
    "c2_bracket",
    "c2_bracket_by_quadrature",
    "c_of_H",
    "covariance_table",
    "double_integral_closed",
    "double_integral_quad",
    "fbm_covariance",
    "kernel_K",
    "kernel_constant",
    "kernel_inner_product",
    "kernel_dK",
    "lag_autocorrelation_mp",
    "lag_sum",
    "pi_alpha",
    "rho_alpha",
]

_SERIES_TERMS = 80


@dataclass(frozen=True)
class HurstParam:
    """Hurst index of a Rosenblatt process together with its derived constants."""

    h: float

    def __post_init__(self):
        h = float(self.h)
        if not 0.5 < h < 1.0:
            raise ValueError(f"Hurst index must lie in (1/2, 1), got {h}")
        object.__setattr__(self, "h", h)

    @property
    def h_prime(self) -> float:
        return (self.h + 1.0) / 2.0

    @property
    def d(self) -> float:
        h = self.h
        return (h / (2.0 * (2.0 * h - 1.0))) ** -0.5 / (h + 1.0)

    @property
    def alpha_h(self) -> float:
        return self.h * (self.h + 1.0) / 2.0

    @property
    def c_kernel(self) -> float:
        return kernel_constant(self.h)


def _h(h) -> float:
    return h.h if isinstance(h, HurstParam) else float(h)


def fbm_covariance(t, s, h):
    """``(t^2H + s^2H - |t - s|^2H) / 2``."""
    h2 = 2.0 * _h(h)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    return 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)


def kernel_constant(h_kernel: float) -> float:
    h = float(h_kernel)
    return sqrt(h * (2.0 * h - 1.0) / special.beta(2.0 - 2.0 * h, h - 0.5))


def kernel_dK(t, s, h_kernel: float):
    """Closed-form derivative of the fBm kernel in its first argument."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s >= t) or np.any(s <= 0):
        raise ValueError("kernel_dK needs 0 < s < t")
    h = float(h_kernel)
    return kernel_constant(h) * (s / t) ** (0.5 - h) * (t - s) ** (h - 1.5)


def kernel_K(t: float, s: float, h_kernel: float) -> float:
    """fBm kernel ``K^H(t, s)`` for ``0 < s < t``.

    With ``a = H - 1/2`` and ``w = (u - s)^a`` the endpoint singularity of the
    defining integral disappears:
    ``int_s^t (u-s)^(H-3/2) u^a du = (1/a) int_0^((t-s)^a) (s + w^(1/a))^a dw``.
    """
    t, s, h = float(t), float(s), float(h_kernel)
    if not 0.0 < s < t:
        raise ValueError("kernel_K needs 0 < s < t")
    a = h - 0.5
    val, _ = integrate.quad(lambda w: (s + w ** (1.0 / a)) ** a, 0.0, (t - s) ** a, epsabs=1e-10, epsrel=1e-12, limit=200)
    return kernel_constant(h) * s ** (-a) * val / a


def kernel_inner_product(u: float, v: float, h_kernel: float) -> float:
    """``int_0^{min(u,v)} dK(u, s) dK(v, s) ds`` by quadrature.

    Both endpoint singularities, ``s^(1-2H)`` and ``(min - s)^(H-3/2)``, go into
    an algebraic weight; the remaining factor is smooth for ``u != v``.
    """
    lo, hi = sorted((float(u), float(v)))
    if not 0.0 < lo < hi:
        raise ValueError("need 0 < u != v")
    h = float(h_kernel)
    pref = kernel_constant(h) ** 2 * (lo * hi) ** (h - 0.5)
    val, _ = integrate.quad(lambda s: (hi - s) ** (h - 1.5), 0.0, lo, weight="alg", wvar=(1.0 - 2.0 * h, h - 1.5),
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return pref * val


@lru_cache(maxsize=256)
def _autocorr_cached(key) -> tuple:
    taps, prec = key
    ell = len(taps) - 1
    with mpmath.workdps(prec):
        a = [mpmath.mpf(0)] * (ell + 1)
        for d in range(ell + 1):
            a[d] = mpmath.fsum(taps[q] * taps[q - d] for q in range(d, ell + 1))
        return tuple(a)


def _exact_taps(filt: Filter):
    if filt.exact is not None and all(isinstance(x, int) for x in filt.exact):
        return tuple(filt.exact), 0
    if filt.exact is not None:
        return tuple(filt.exact), 60
    return tuple(mpmath.mpf(float(x)) for x in filt.coeffs), 60


def autocorrelation(filt: Filter) -> np.ndarray:
    """``a_d`` for ``d = 0..ell`` (the sequence is symmetric, ``a_-d = a_d``)."""
    return _autocorr_float(_exact_taps(filt)).copy()


def lag_autocorrelation_mp(filt: Filter) -> tuple:
    """``a_d`` as exact integers or 60-digit mpmath numbers."""
    key = _exact_taps(filt)
    if key[1] == 0:
        taps = key[0]
        ell = len(taps) - 1
        return tuple(sum(taps[q] * taps[q - d] for q in range(d, ell + 1)) for d in range(ell + 1))
    return _autocorr_cached(key)


@lru_cache(maxsize=256)
def _autocorr_float(key) -> np.ndarray:
    taps, prec = key
    if prec == 0:
        ell = len(taps) - 1
        return np.array([float(sum(taps[q] * taps[q - d] for q in range(d, ell + 1))) for d in range(ell + 1)])
    return np.array([float(x) for x in _autocorr_cached(key)])


@lru_cache(maxsize=256)
def _lag_moments(key, order: int, nterms: int) -> np.ndarray:
    """Even moments ``M_j = sum_d a_d d^j`` over ``d = -ell..ell`` in high precision.

    Moments below ``2p`` vanish for a filter of order ``p``; they are set to zero
    rather than left as rounding noise.
    """
    taps, prec = key
    ell = len(taps) - 1
    with mpmath.workdps(max(prec, 30) + 40):
        if prec == 0:
            a = [sum(taps[q] * taps[q - d] for q in range(d, ell + 1)) for d in range(ell + 1)]
        else:
            a = _autocorr_cached(key)
        out = np.zeros(nterms)
        for j in range(2 * order, nterms, 2):
            out[j] = float(2 * mpmath.fsum(a[d] * mpmath.mpf(d) ** j for d in range(1, ell + 1)))
    return out


@lru_cache(maxsize=1024)
def _small_lags(key, h2: float) -> np.ndarray:
    taps, prec = key
    ell = len(taps) - 1
    with mpmath.workdps(50):
        if prec == 0:
            a = [mpmath.mpf(sum(taps[q] * taps[q - d] for q in range(d, ell + 1))) for d in range(ell + 1)]
        else:
            a = _autocorr_cached(key)
        e = mpmath.mpf(h2)
        zero = mpmath.mpf(0) if h2 > 0 else mpmath.mpf(1)

        def pw(n):
            return zero if n == 0 else mpmath.mpf(abs(n)) ** e

        return np.array([
            float(mpmath.fsum(a[abs(d)] * pw(k + d) for d in range(-ell, ell + 1)))
            for k in range(2 * ell + 2)
        ])


def lag_sum(filt: Filter, h, k) -> np.ndarray:
    """``sum_{q,r} alpha_q alpha_r |k + q - r|^{2H}`` for integer lags ``k``.

    Small lags are summed directly at 50 digits; for ``|k| >= 2 ell + 2`` the binomial
    expansion ``|k|^{2H} sum_j C(2H, j) M_j k^{-j}`` avoids the cancellation
    that otherwise destroys all digits at large ``k``.
    """
    h2 = 2.0 * _h(h)
    k = np.abs(np.atleast_1d(np.asarray(k, dtype=np.int64)))
    ell = filt.length
    out = np.empty(k.shape, dtype=float)
    small = k < 2 * ell + 2
    if np.any(small):
        table = _small_lags(_exact_taps(filt), h2)
        out[small] = table[k[small]]
    if np.any(~small):
        nterms = 2 * filt.order + _SERIES_TERMS
        mom = _lag_moments(_exact_taps(filt), filt.order, nterms)
        j = np.arange(nterms)
        coef = special.binom(h2, j) * mom
        kl = k[~small].astype(float)
        # Horner in 1/k
        inv = 1.0 / kl
        acc = np.zeros_like(kl)
        for c in coef[::-1]:
            acc = acc * inv + c
        out[~small] = kl**h2 * acc
    return out


def c_of_H(filt: Filter, x: float) -> float:
    """``c(x) = -sum_{q,r} alpha_q alpha_r |q - r|^{2x}`` with ``0^0 = 1``."""
    x = float(x)
    if x == 0.0:
        taps, prec = _exact_taps(filt)
        if prec == 0:
            return float(-sum(taps) ** 2)
        with mpmath.workdps(prec):
            s = mpmath.fsum(taps)
            # taps carry 60 digits, so anything this small is an exact zero
            return float(-mpmath.chop(s, tol=mpmath.mpf(10) ** -40) ** 2)
    a = autocorrelation(filt)
    d = np.arange(1, len(a), dtype=float)
    return float(-2.0 * np.sum(a[1:] * d ** (2.0 * x)))


def pi_alpha(filt: Filter, h, N: int, j) -> np.ndarray | float:
    """Covariance of the filtered process at lag ``j`` on the grid of mesh ``1/N``."""
    val = -0.5 * float(N) ** (-2.0 * _h(h)) * lag_sum(filt, h, j)
    return float(val[0]) if np.ndim(j) == 0 else val


def rho_alpha(filt: Filter, h, k) -> np.ndarray | float:
    """``lag_sum / c(H)``; equals -1 at ``k = 0``."""
    val = lag_sum(filt, h, k) / c_of_H(filt, _h(h))
    return float(val[0]) if np.ndim(k) == 0 else val


def _second_difference(d, hp: float):
    d = np.abs(np.asarray(d, dtype=float))
    e = 2.0 * hp
    return np.abs(1.0 + d) ** e + np.abs(1.0 - d) ** e - 2.0 * d**e


def double_integral_closed(d, hp: float):
    """``int_0^1 int_0^1 |u - v - d|^{2H'-2} du dv`` in closed form."""
    return _second_difference(d, hp) / (2.0 * hp * (2.0 * hp - 1.0))


def double_integral_quad(d: float, hp: float) -> float:
    """The same double integral by nested adaptive quadrature."""
    beta = 2.0 * hp - 2.0
    d = float(d)

    def inner(v):
        sing = v + d
        pts = [sing] if 0.0 < sing < 1.0 else None
        val, _ = integrate.quad(lambda u: abs(u - sing) ** beta, 0.0, 1.0, points=pts, epsabs=1e-13, epsrel=1e-12, limit=200)
        return val

    kinks = [p for p in (-d, 1.0 - d) if 0.0 < p < 1.0]
    val, _ = integrate.quad(inner, 0.0, 1.0, points=kinks or None, epsabs=1e-12, epsrel=1e-11, limit=200)
    return val


def c2_bracket(filt: Filter, h) -> float:
    """Inner brace of the second-chaos constant, built from partial sums."""
    b = partial_sums(filt).b
    hp = (_h(h) + 1.0) / 2.0
    idx = np.arange(len(b))
    diff = idx[:, None] - idx[None, :]
    return float(b @ _second_difference(diff, hp) @ b)


def c2_bracket_by_quadrature(filt: Filter, h) -> float:
    """Brace rebuilt from the double integrals ``2H'(2H'-1) int int |u-v-q+r|^{2H'-2}``."""
    b = partial_sums(filt).b
    hp = (_h(h) + 1.0) / 2.0
    ell = len(b) - 1
    vals = {d: 2.0 * hp * (2.0 * hp - 1.0) * double_integral_quad(d, hp) for d in range(0, ell + 1)}
    total = 0.0
    for q in range(ell + 1):
        for r in range(ell + 1):
            total += b[q] * b[r] * vals[abs(q - r)]
    return total


def c2(filt: Filter, h) -> float:
    """Asymptotic variance constant of the second-chaos term."""
    hv = _h(h)
    c = c_of_H(filt, hv)
    return 64.0 / c**2 * (2.0 * hv - 1.0) / (hv * (hv + 1.0) ** 2) * c2_bracket(filt, hv) ** 2


@dataclass(frozen=True)
class CovarianceTable:
    filter: Filter
    h: HurstParam
    pi0: float
    rho: np.ndarray


def covariance_table(filt: Filter, h, K: int) -> CovarianceTable:
    """``pi(0)`` at unit mesh and ``rho(0..K)``."""
    hp = h if isinstance(h, HurstParam) else HurstParam(h)
    return CovarianceTable(filt, hp, c_of_H(filt, hp.h) / 2.0, rho_alpha(filt, hp, np.arange(K + 1)))
