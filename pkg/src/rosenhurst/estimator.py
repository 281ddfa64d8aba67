"""The quadratic-variation Hurst estimator and its accuracy measures."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from math import exp, log, sqrt

import mpmath
import numpy as np
from scipy import optimize

from . import analytic
from .filters import Filter
from .variation import s_n

__all__ = [
    "DegeneratePathError",
    "EstimateReport",
    "EstimationError",
    "OutOfRangeError",
    "estimate_from_sn",
    "estimate_hurst",
    "f_n",
    "monotonicity_bound",
    "normalized_error_stat",
    "standard_error",
]

LOWER, UPPER = 0.5, 1.0
X_TOL = 1e-12


class EstimationError(ValueError):
    pass


class DegeneratePathError(EstimationError):
    pass


class OutOfRangeError(EstimationError):
    """No root in [1/2, 1]; ``report`` carries the clamped endpoint."""

    def __init__(self, msg, report):
        super().__init__(msg)
        self.report = report


@dataclass
class EstimateReport:
    h_hat: float
    std_err: float
    n: int
    filter: str
    solver: dict = field(default_factory=dict)
    n_large_enough: bool = True
    normalized_error: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _moment_ratio(filt: Filter, x: float) -> float:
    """``sum aa log|q-r| |q-r|^2x / sum aa |q-r|^2x``.

    For filters of order >= 2 the denominator (which is ``-c(x)``) vanishes at
    ``x = 1`` while the numerator stays positive, so the ratio tends to -inf
    there; both sums are formed at 40 digits to resolve the approach.
    """
    a = analytic.lag_autocorrelation_mp(filt)
    with mpmath.workdps(40):
        e = 2 * mpmath.mpf(x)
        den = mpmath.fsum(a[d] * mpmath.mpf(d) ** e for d in range(1, len(a)))
        num = mpmath.fsum(a[d] * mpmath.log(d) * mpmath.mpf(d) ** e for d in range(1, len(a)))
        if den >= 0:
            return float("-inf")
        return float(num / den)


_BOUND_CACHE: dict = {}


def monotonicity_bound(filt: Filter, grid: int = 2001) -> float:
    """Sample size beyond which ``f_n`` is strictly decreasing on [1/2, 1].

    Maximizes the exponent on a grid and polishes the best grid point with a
    bounded scalar search.
    """
    key = (tuple(np.asarray(filt.coeffs, dtype=float).tolist()), int(grid))
    if key not in _BOUND_CACHE:
        _BOUND_CACHE[key] = _monotonicity_bound(filt, grid)
    return _BOUND_CACHE[key]


def _monotonicity_bound(filt: Filter, grid: int) -> float:
    xs = np.linspace(LOWER, UPPER, grid)
    vals = np.array([_moment_ratio(filt, x) for x in xs])
    i = int(np.argmax(vals))
    best = vals[i]
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, grid - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda x: -_moment_ratio(filt, x), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        best = max(best, -res.fun)
    return exp(best)


def f_n(x, N: int, sn: float, filt: Filter) -> float:
    """``c(x) N^{-2x} / 2 - S_N``; its root in [1/2, 1] is the estimate."""
    return analytic.c_of_H(filt, x) * float(N) ** (-2.0 * x) / 2.0 - sn


def standard_error(h_hat: float, N: int, filt: Filter) -> float:
    """``sqrt(c2(h_hat)) / (2 N^{1-h_hat} log N)``."""
    if N < 3:
        raise ValueError("standard error needs N >= 3")
    return sqrt(analytic.c2(filt, h_hat)) / (2.0 * float(N) ** (1.0 - h_hat) * log(N))


def normalized_error_stat(h_hat: float, h_true: float, N: int, filt: Filter) -> float:
    """``2 c2(h_hat)^{-1/2} N^{1-h_hat} log N (h_hat - h_true)``."""
    return 2.0 / sqrt(analytic.c2(filt, h_hat)) * float(N) ** (1.0 - h_hat) * log(N) * (h_hat - h_true)


def estimate_from_sn(sn: float, N: int, filt: Filter, h_true: float | None = None) -> EstimateReport:
    """Solve ``c(x) N^{-2x} / 2 = S_N`` on [1/2, 1] by bisection in log form.

    Raises ``DegeneratePathError`` for ``S_N <= 0`` and ``OutOfRangeError`` (with
    the clamped endpoint attached) when the root lies outside [1/2, 1].
    """
    if not sn > 0.0 or not np.isfinite(sn):
        raise DegeneratePathError(f"S_N = {sn!r}: the filtered path is identically zero")
    logN = log(N)
    target = log(2.0 * sn)

    def g(x):
        c = analytic.c_of_H(filt, x)
        return (log(c) if c > 0.0 else float("-inf")) - 2.0 * x * logN - target

    big_enough = N > monotonicity_bound(filt)
    g_lo, g_hi = g(LOWER), g(UPPER)
    if g_lo < 0.0 or g_hi > 0.0:
        x = LOWER if g_lo < 0.0 else UPPER
        rep = _report(x, N, filt, h_true, {"iterations": 0, "bracket": [x, x], "residual": f_n(x, N, sn, filt),
                                           "status": "out_of_range"}, big_enough)
        raise OutOfRangeError(f"no root of the estimating equation in [1/2, 1]; clamped to {x}", rep)
    lo, hi, it = LOWER, UPPER, 0
    while hi - lo >= X_TOL:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        it += 1
    x = 0.5 * (lo + hi)
    solver = {"iterations": it, "bracket": [lo, hi], "residual": f_n(x, N, sn, filt), "status": "ok"}
    return _report(x, N, filt, h_true, solver, big_enough)


def _report(x, N, filt, h_true, solver, big_enough) -> EstimateReport:
    se = standard_error(x, N, filt) if LOWER < x < UPPER else float("nan")
    rep = EstimateReport(x, se, int(N), filt.label, solver, bool(big_enough))
    if h_true is not None and LOWER < x < UPPER:
        rep.normalized_error = normalized_error_stat(x, h_true, N, filt)
    return rep


def estimate_hurst(path, filt: Filter, h_true: float | None = None) -> EstimateReport:
    """Estimate H from a sampled path.

    A path the filter annihilates up to rounding (a polynomial of low degree,
    a constant) is reported as degenerate rather than estimated from noise.
    """
    z = np.asarray(getattr(path, "values", path), dtype=float)
    sn = s_n(z, filt)
    noise = 64.0 * np.finfo(float).eps * float(np.max(np.abs(z), initial=0.0)) * float(np.abs(filt.coeffs).sum())
    if sn <= noise * noise:
        raise DegeneratePathError(f"S_N = {sn!r} is at rounding level: the filtered path is zero")
    return estimate_from_sn(sn, len(z) - 1, filt, h_true)
