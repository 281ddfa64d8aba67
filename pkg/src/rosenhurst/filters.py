"""Discrete filters: finite differences, Daubechies wavelets and custom taps.

A filter of length ``ell`` is a coefficient vector ``alpha_0..alpha_ell`` whose
moments ``sum_q alpha_q q^r`` vanish for ``r < p`` and not for ``r = p``; ``p``
is the order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import mpmath
import numpy as np

__all__ = [
    "Filter",
    "custom_filter",
    "FilterError",
    "PartialSums",
    "daubechies_filter",
    "finite_difference_filter",
    "parse_filter",
    "partial_sums",
    "validate_filter",
]

ZERO_TOL = 1e-10
NONZERO_TOL = 1e-8
MAX_DAUBECHIES = 20


class FilterError(ValueError):
    """Raised for coefficient vectors that are not admissible filters."""


@dataclass(frozen=True)
class Filter:
    coeffs: np.ndarray
    order: int
    kind: str = "custom"
    label: str = ""
    # integer (finite difference) or 60-digit (Daubechies) taps, when known
    exact: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        if not self.label:
            object.__setattr__(self, "label", f"{self.kind}:{','.join(repr(float(x)) for x in c)}")

    @property
    def length(self) -> int:
        return len(self.coeffs) - 1

    def __neg__(self) -> "Filter":
        # fneg(exact=True) keeps all digits; plain negation would round to mpmath's working precision
        ex = None if self.exact is None else tuple(
            -x if isinstance(x, int) else mpmath.fneg(x, exact=True) for x in self.exact)
        return Filter(-self.coeffs, self.order, self.kind, "-" + self.label, ex)


@dataclass(frozen=True)
class PartialSums:
    b: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        b.setflags(write=False)
        object.__setattr__(self, "b", b)


def _orthonormal_moments(coeffs: np.ndarray) -> np.ndarray:
    """Moments of the unit-norm filter against discrete orthonormal polynomials.

    The first ``p`` entries vanish exactly when the monomial moments of order
    ``< p`` vanish (the two bases span the same nested spaces), but unlike raw
    monomials they stay O(1) for long filters.
    """
    a = np.asarray(coeffs, dtype=float)
    ell = len(a) - 1
    if ell == 0:
        return np.array([1.0])
    x = np.linspace(-1.0, 1.0, ell + 1)
    q, r = np.linalg.qr(np.polynomial.chebyshev.chebvander(x, ell))
    # fix the sign so that each basis polynomial has a positive leading term
    q = q * np.sign(np.diag(r))
    return q.T @ (a / np.linalg.norm(a))


def _raw_moments(coeffs, upto: int) -> list:
    if all(isinstance(c, int) for c in coeffs):
        return [sum(c * q**r for q, c in enumerate(coeffs)) for r in range(upto + 1)]
    a = np.asarray(coeffs, dtype=float)
    q = np.arange(len(a), dtype=float)
    return [float(np.sum(a * q**r)) for r in range(upto + 1)]


def validate_filter(coeffs) -> tuple[int, dict]:
    """Return the order of ``coeffs`` together with moment diagnostics.

    Vanishing is judged on normalized moments (see ``_orthonormal_moments``);
    the raw monomial moments are reported alongside.
    """
    coeffs = list(coeffs)
    if len(coeffs) < 2:
        raise FilterError("a filter needs at least two coefficients")
    a = np.asarray(coeffs, dtype=float)
    if not np.all(np.isfinite(a)) or not np.any(a):
        raise FilterError("coefficients must be finite and not all zero")
    m = _orthonormal_moments(a)
    diag = {"normalized_moments": m.tolist(), "raw_moments": _raw_moments(coeffs, len(a) - 1)}
    if abs(m[0]) >= ZERO_TOL:
        raise FilterError(f"coefficients do not sum to zero (normalized sum {m[0]:.3g})")
    p = 1
    while p < len(m) and abs(m[p]) < ZERO_TOL:
        p += 1
    if p == len(m) or abs(m[p]) <= NONZERO_TOL:
        raise FilterError(f"order undetermined: moment {p} is neither zero nor clearly nonzero")
    diag["residual"] = float(np.max(np.abs(m[:p])))
    return p, diag


def finite_difference_filter(order: int) -> Filter:
    """Order-``ell`` finite difference, ``alpha_k = (-1)^(k+1) C(ell, k)``."""
    ell = int(order)
    if ell < 1:
        raise FilterError("finite difference order must be >= 1")
    if ell == 1:
        warnings.warn("order-1 filters fall outside the p >= 2 regime of the limit theorems", stacklevel=2)
    exact = tuple((-1) ** (k + 1) * comb(ell, k) for k in range(ell + 1))
    p, _ = validate_filter(exact)
    if p != ell:
        raise FilterError(f"finite difference of order {ell} validated as order {p}")
    return Filter(np.array(exact, dtype=float), p, "finite_difference", f"fd:{ell}", exact)


@lru_cache(maxsize=None)
def _daubechies_highpass(p: int) -> tuple:
    """High-pass taps of the Daubechies wavelet with ``p`` vanishing moments.

    Spectral factorization at 60 digits: the roots of the Daubechies polynomial
    ``P(y) = sum_k C(p-1+k, k) y^k`` map to ``z + 1/z = 2 - 4y``; the roots inside
    the unit circle together with ``p`` zeros at ``z = -1`` give the low-pass
    filter, normalized to ``sum h = sqrt(2)``.
    """
    with mpmath.workdps(60):
        poly = [mpmath.mpf(comb(p - 1 + k, k)) for k in range(p)]
        roots = mpmath.polyroots(poly[::-1], maxsteps=500, extraprec=200) if p > 1 else []
        h = [mpmath.mpc(1)]
        for y in roots:
            s = 2 - 4 * y
            disc = mpmath.sqrt(s * s - 4)
            z = (s + disc) / 2
            if abs(z) >= 1:
                z = (s - disc) / 2
            h = [(h[i] if i < len(h) else 0) - z * (h[i - 1] if i else 0) for i in range(len(h) + 1)]
        for _ in range(p):
            h = [(h[i] if i < len(h) else 0) + (h[i - 1] if i else 0) for i in range(len(h) + 1)]
        h = [mpmath.re(c) for c in h]
        scale = mpmath.sqrt(2) / mpmath.fsum(h)
        h = [c * scale for c in h]
        n = len(h)
        return tuple((-1) ** k * h[n - 1 - k] for k in range(n))


def daubechies_filter(vanishing_moments: int) -> Filter:
    """Daubechies high-pass filter of length ``2p`` and order ``p`` (unit energy)."""
    p = int(vanishing_moments)
    if not 2 <= p <= MAX_DAUBECHIES:
        raise FilterError(f"unsupported Daubechies order {p}; supported range is 2..{MAX_DAUBECHIES}")
    exact = _daubechies_highpass(p)
    g = [float(x) for x in exact]
    order, _ = validate_filter(g)
    if order != p:
        raise FilterError(f"Daubechies filter db:{p} validated as order {order}")
    return Filter(np.array(g), order, "daubechies", f"db:{p}", exact)


def partial_sums(filt: Filter) -> PartialSums:
    """Prefix sums ``b_q = alpha_0 + ... + alpha_q``, with ``b_ell`` set to 0."""
    if filt.exact is not None:
        b = np.array([float(x) for x in np.cumsum(np.array(filt.exact, dtype=object))])
    else:
        b = np.cumsum(filt.coeffs)
    b[-1] = 0.0
    return PartialSums(b)


def custom_filter(coeffs) -> Filter:
    coeffs = [float(c) for c in coeffs]
    p, _ = validate_filter(coeffs)
    return Filter(np.array(coeffs), p, "custom", "custom:" + ",".join(repr(c) for c in coeffs))


def parse_filter(spec: str) -> Filter:
    """Build a filter from ``fd:<l>``, ``db:<p>`` or ``custom:<c0,c1,...>``."""
    kind, _, arg = spec.strip().partition(":")
    kind = kind.lower()
    try:
        if kind == "fd":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return finite_difference_filter(int(arg))
        if kind == "db":
            return daubechies_filter(int(arg))
        if kind == "custom":
            return custom_filter(float(x) for x in arg.split(","))
    except ValueError as exc:
        raise FilterError(f"bad filter spec {spec!r}: {exc}") from None
    raise FilterError(f"unknown filter kind in {spec!r}; expected fd:, db: or custom:")
