"""Seeded sample paths: Brownian motion, fBm and Rosenblatt processes on [0, 1].

All Gaussian draws come from a Philox counter-based generator keyed by
``(seed, stream_id)``, so replicate ``i`` of an experiment is the same
whichever worker produces it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

from .analytic import HurstParam

__all__ = [
    "CHOLESKY_MAX",
    "GenerationError",
    "RngStream",
    "SamplePath",
    "bm_path",
    "circulant_sqrt_eigenvalues",
    "fbm_path",
    "fgn",
    "fgn_autocovariance",
    "gaussian_sequence",
    "rosenblatt_path",
    "rosenblatt_z1",
]

CHOLESKY_MAX = 1 << 12
SCHEMES = ("matched", "hermite")


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = int(getattr(self, name))
            if not 0 <= v < 1 << 64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer")
            object.__setattr__(self, name, v)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed | (self.stream_id << 64)))


@dataclass(frozen=True)
class SamplePath:
    values: np.ndarray
    n: int
    process: str
    hurst: float
    seed: int
    stream_id: int = 0
    oversample: int = 1
    scheme: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.n + 1,):
            raise ValueError(f"expected {self.n + 1} values, got {v.shape}")
        if v[0] != 0.0 or not np.all(np.isfinite(v)):
            raise ValueError("path must start at 0 and be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n


def fgn_autocovariance(h: float, k) -> np.ndarray:
    """``(|k+1|^2H - 2|k|^2H + |k-1|^2H) / 2``."""
    k = np.abs(np.asarray(k, dtype=float))
    h2 = 2.0 * h
    return 0.5 * (np.abs(k + 1.0) ** h2 - 2.0 * k**h2 + np.abs(k - 1.0) ** h2)


def circulant_sqrt_eigenvalues(acov: np.ndarray) -> np.ndarray:
    """Scaled square roots of the eigenvalues of the minimal circulant embedding.

    Raises ``GenerationError`` when the embedding is not nonnegative definite.
    """
    row = np.concatenate([acov, acov[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise GenerationError(f"circulant embedding has a negative eigenvalue ({lam.min():.3g})")
    return np.sqrt(np.clip(lam, 0.0, None) / len(row))


@lru_cache(maxsize=32)
def _factor(kind: str, h: float, n: int):
    k = np.arange(n + 1)
    acov = fgn_autocovariance(h, k)
    if kind == "matched":
        acov = np.sqrt(acov)
    try:
        return "fft", circulant_sqrt_eigenvalues(acov)
    except GenerationError:
        if n > CHOLESKY_MAX:
            raise
    return "chol", linalg.cholesky(linalg.toeplitz(acov[:n]), lower=True)


def gaussian_sequence(kind: str, h: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary centered Gaussian sequence of length ``n``.

    ``kind = "fgn"``: fractional Gaussian noise with index ``h``.
    ``kind = "matched"``: autocovariance ``sqrt(gamma_h(k))``; squared and summed
    it reproduces the covariance of fBm with index ``h`` exactly.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    method, fac = _factor(kind, float(h), int(n))
    if method == "fft":
        m = len(fac)
        z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        return np.fft.fft(fac * z).real[:n]
    return fac @ rng.standard_normal(n)


def fgn(h: float, n: int, stream: RngStream) -> np.ndarray:
    """Fractional Gaussian noise with unit variance (circulant embedding)."""
    if not 0.0 < h < 1.0:
        raise ValueError("Hurst index must lie in (0, 1)")
    return gaussian_sequence("fgn", h, n, stream.generator())


def bm_path(N: int, stream: RngStream) -> SamplePath:
    z = stream.generator().standard_normal(N) / np.sqrt(N)
    return SamplePath(np.concatenate([[0.0], np.cumsum(z)]), N, "bm", 0.5, stream.seed, stream.stream_id)


def fbm_path(h: float, N: int, stream: RngStream) -> SamplePath:
    """fBm on the grid ``i/N``: cumulated fGn scaled by ``N^-H``."""
    x = fgn(h, N, stream) * float(N) ** (-h)
    return SamplePath(np.concatenate([[0.0], np.cumsum(x)]), N, "fbm", float(h), stream.seed, stream.stream_id)


def _kappa(acov_fn, M: int) -> float:
    # [2 sum_{|k|<M} (M - |k|) r(k)^2]^(-1/2)
    k = np.arange(1, M)
    s = M * acov_fn(0) ** 2 + 2.0 * np.sum((M - k) * acov_fn(k) ** 2)
    return float((2.0 * s) ** -0.5)


def rosenblatt_path(h, N: int, oversample: int, stream: RngStream, scheme: str = "matched") -> SamplePath:
    """Rosenblatt path by normalized partial sums of ``X_j^2 - 1``.

    ``Z(i/N) = kappa * sum_{j <= i m} (X_j^2 - 1)`` over ``M = N m`` terms of a
    long-memory Gaussian sequence with memory parameter ``H' = (H + 1)/2``,
    ``kappa`` normalizing ``Var Z(1)`` to one.

    ``scheme = "hermite"`` takes X to be fGn of index ``H'``; the covariance of
    the resulting path only approaches that of fBm as ``m`` grows.
    ``scheme = "matched"`` takes X with autocovariance ``sqrt(gamma_H(k))``,
    which has the same ``k^(2H'-2)`` memory and makes the covariance of the
    path on the grid exactly that of fBm for every ``m``.
    """
    hv = h.h if isinstance(h, HurstParam) else HurstParam(h).h
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    N, m = int(N), int(oversample)
    if N < 1 or m < 1:
        raise ValueError("N and oversample must be positive")
    M = N * m
    if M < 2:
        raise ValueError("need N * oversample >= 2")
    rng = stream.generator()
    if scheme == "matched":
        x = gaussian_sequence("matched", hv, M, rng)
        kappa = (2.0 * float(M) ** (2.0 * hv)) ** -0.5
    else:
        hp = (hv + 1.0) / 2.0
        x = gaussian_sequence("fgn", hp, M, rng)
        kappa = _kappa(lambda k: fgn_autocovariance(hp, k), M)
    z = np.concatenate([[0.0], np.cumsum(x * x - 1.0)])[::m] * kappa
    return SamplePath(z, N, "rosenblatt", hv, stream.seed, stream.stream_id, m, scheme)


def rosenblatt_z1(h, n_internal: int, stream: RngStream, scheme: str = "matched") -> float:
    """One draw from (the discretized law of) the Rosenblatt variable ``Z(1)``."""
    return float(rosenblatt_path(h, 1, n_internal, stream, scheme).values[-1])
