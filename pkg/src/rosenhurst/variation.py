"""Filtered quadratic variations of a sampled path."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import analytic
from .filters import Filter

__all__ = ["VariationReport", "adjusted_variation", "filtered_series", "s_n", "v_n", "variation_report"]


@dataclass
class VariationReport:
    s_n: float
    v_n: float | None
    adjusted: float | None
    n: int
    filter: str
    h_used: float | None

    def to_dict(self) -> dict:
        return asdict(self)


def _values(path) -> np.ndarray:
    return np.asarray(getattr(path, "values", path), dtype=float)


def filtered_series(path, filt: Filter) -> np.ndarray:
    """``V(i/N) = sum_q alpha_q Z((i - q)/N)`` for ``i = ell .. N-1``."""
    z = _values(path)
    N = len(z) - 1
    ell = filt.length
    if N + 1 < ell + 2:
        raise ValueError(f"path of {N + 1} points is too short for a filter of length {ell}")
    a = filt.coeffs
    # z[ell - q : N - q] holds Z((i - q)/N) for i = ell .. N-1
    return sum(a[q] * z[ell - q : N - q] for q in range(ell + 1))


def s_n(path, filt: Filter) -> float:
    """Mean square of the filtered series (divisor ``N - ell``)."""
    v = filtered_series(path, filt)
    return float(np.dot(v, v) / len(v))


def v_n(path, filt: Filter, h) -> float:
    """``S_N / pi(0) - 1`` with ``pi(0) = N^{-2H} c(H) / 2``."""
    N = len(_values(path)) - 1
    return s_n(path, filt) / analytic.pi_alpha(filt, h, N, 0) - 1.0


def adjusted_variation(path, filt: Filter, h) -> float:
    """``V_N - sqrt(c2) N^{H-1} Z(1)``, with ``Z(1)`` the last path value."""
    z = _values(path)
    N = len(z) - 1
    hv = analytic._h(h)
    return v_n(z, filt, hv) - np.sqrt(analytic.c2(filt, hv)) * float(N) ** (hv - 1.0) * z[-1]


def variation_report(path, filt: Filter, h=None, adjusted: bool = False) -> VariationReport:
    z = _values(path)
    sn = s_n(z, filt)
    vn = adj = None
    if h is not None:
        hv = analytic._h(h)
        vn = sn / analytic.pi_alpha(filt, hv, len(z) - 1, 0) - 1.0
        if adjusted:
            adj = vn - np.sqrt(analytic.c2(filt, hv)) * float(len(z) - 1) ** (hv - 1.0) * z[-1]
        h = hv
    return VariationReport(sn, vn, adj, len(z) - 1, filt.label, h)
