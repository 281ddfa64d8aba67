"""Experiment plumbing: configs, the Monte Carlo runner, standard-error tables
and the CSV/JSON emitters used by the command line.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from math import log, sqrt

import numpy as np
from scipy import stats

from . import analytic, estimator, simulate, variation
from .filters import FilterError, daubechies_filter, finite_difference_filter, parse_filter

__all__ = [
    "SCHEMA_VERSION",
    "CellSummary",
    "ExperimentConfig",
    "McReport",
    "figure_table",
    "format_float",
    "generate_path",
    "ks_two_sample",
    "read_config",
    "read_path_csv",
    "replicate_statistics",
    "run_montecarlo",
    "summarize",
    "table_to_csv",
    "to_json",
    "write_path_csv",
    "write_table_csv",
]

SCHEMA_VERSION = 1
PROCESSES = ("bm", "fbm", "rosenblatt")
STATISTICS = ("h_err", "abs_h_err_logn", "norm_err", "scaled_s", "scaled_v", "adjusted", "z1")
KS_MIN = 30


# ------------------------------------------------------------------ config


def _floats(v) -> tuple:
    if isinstance(v, str):
        v = [s for s in v.replace(",", " ").split() if s]
    elif np.isscalar(v):
        v = [v]
    return tuple(float(x) for x in v)


def _ints(v) -> tuple:
    return tuple(int(round(x)) for x in _floats(v))


def _strs(v) -> tuple:
    if isinstance(v, str):
        # custom filters contain commas, so filter lists are split on whitespace or ';'
        v = [s for s in v.replace(";", " ").split() if s]
    return tuple(str(x) for x in v)


@dataclass(frozen=True)
class ExperimentConfig:
    process: str = "rosenblatt"
    hurst: tuple = (0.7,)
    n: tuple = (1024,)
    filters: tuple = ("fd:2",)
    replicates: int = 100
    seed: int = 0
    workers: int = 1
    out: str | None = None
    oversample: int = 16
    scheme: str = "matched"
    k_max: int = 10_000
    nodes_per_dim: int = 16
    rel_tol: float = 5e-3
    keep_samples: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hurst", _floats(self.hurst))
        object.__setattr__(self, "n", _ints(self.n))
        object.__setattr__(self, "filters", _strs(self.filters))
        if self.process not in PROCESSES:
            raise ValueError(f"process must be one of {PROCESSES}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not self.hurst or not self.n or not self.filters:
            raise ValueError("hurst, n and filters must be non-empty")
        for h in self.hurst:
            if self.process == "rosenblatt":
                analytic.HurstParam(h)
            elif not 0.0 < h < 1.0:
                raise ValueError(f"Hurst index {h} outside (0, 1)")
        for N in self.n:
            if N < 2:
                raise ValueError("every N must be >= 2")
        for spec in self.filters:
            parse_filter(spec)
        if self.oversample < 1:
            raise ValueError("oversample must be >= 1")
        if self.scheme not in simulate.SCHEMES:
            raise ValueError(f"scheme must be one of {simulate.SCHEMES}")
        simulate.RngStream(self.seed)

    @classmethod
    def from_mapping(cls, m: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for k, v in m.items():
            k = k.replace("-", "_")
            if k not in known or v is None:
                continue
            if k in ("replicates", "seed", "workers", "oversample", "k_max", "nodes_per_dim"):
                v = int(v)
            elif k == "rel_tol":
                v = float(v)
            elif k == "keep_samples" and isinstance(v, str):
                v = v.strip().lower() in ("1", "true", "yes", "on")
            kw[k] = v
        return cls(**kw)


def read_config(path) -> dict:
    """Flat ``key = value`` file; blank lines and ``#`` comments are ignored."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


# --------------------------------------------------------------- emitters


def format_float(x: float) -> str:
    return f"{float(x):.17g}"


def write_path_csv(path: simulate.SamplePath, fh) -> None:
    fh.write("t,value\n")
    N = path.n
    for i, z in enumerate(path.values):
        fh.write(f"{format_float(i / N)},{format_float(z)}\n")


def read_path_csv(fh) -> np.ndarray:
    rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["t", "value"]:
        raise ValueError("expected a 't,value' header")
    return np.array([float(r[1]) for r in rows[1:] if r], dtype=float)


def write_table_csv(rows: list[dict], fh, columns) -> None:
    fh.write(",".join(columns) + "\n")
    for r in rows:
        fh.write(",".join(format_float(r[c]) if isinstance(r[c], float) else str(r[c]) for c in columns) + "\n")


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def to_json(kind: str, payload: dict) -> str:
    """Stable JSON document: ``schema_version``, ``kind`` and the payload."""
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind}
    doc.update(_clean(payload))
    return json.dumps(doc, indent=2, sort_keys=True)


# ---------------------------------------------------------------- statistics


def ks_two_sample(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F_a - F_b|``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < KS_MIN or b.size < KS_MIN:
        raise ValueError(f"both samples need at least {KS_MIN} points")
    return float(stats.ks_2samp(a, b).statistic)


@dataclass
class CellSummary:
    mean: float
    median: float
    sd: float
    skewness: float
    excess_kurtosis: float
    ks_normal: float

    @classmethod
    def of(cls, x) -> "CellSummary":
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return cls(*(float("nan"),) * 6)
        sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
        if x.size > 2 and sd > 0:
            sk = float(stats.skew(x))
            ku = float(stats.kurtosis(x))
            ks = float(stats.kstest((x - x.mean()) / sd, "norm").statistic)
        else:
            sk = ku = ks = float("nan")
        return cls(float(np.mean(x)), float(np.median(x)), sd, sk, ku, ks)


def summarize(samples: dict) -> dict:
    return {k: asdict(CellSummary.of(v)) for k, v in samples.items()}


# ------------------------------------------------------------ Monte Carlo


def generate_path(process: str, h: float, N: int, stream: simulate.RngStream, oversample: int = 16,
                  scheme: str = "matched") -> simulate.SamplePath:
    if process == "rosenblatt":
        return simulate.rosenblatt_path(h, N, oversample, stream, scheme)
    if process == "fbm":
        return simulate.fbm_path(h, N, stream)
    if process == "bm":
        return simulate.bm_path(N, stream)
    raise ValueError(f"unknown process {process!r}")


def replicate_statistics(z: np.ndarray, h: float, filt) -> dict:
    """All per-path statistics for one filter; raises the estimator's errors."""
    N = len(z) - 1
    sn = variation.s_n(z, filt)
    vn = sn / analytic.pi_alpha(filt, h, N, 0) - 1.0
    c2 = analytic.c2(filt, h) if 0.5 < h < 1.0 else float("nan")
    out = {
        "scaled_s": float(N) ** (2.0 * h) * sn,
        "scaled_v": float(N) ** (1.0 - h) * vn,
        "adjusted": sqrt(N) * (vn - sqrt(c2) * float(N) ** (h - 1.0) * z[-1]),
        "z1": float(z[-1]),
    }
    rep = estimator.estimate_from_sn(sn, N, filt, h if 0.5 < h < 1.0 else None)
    out["h_err"] = rep.h_hat - h
    out["abs_h_err_logn"] = abs(rep.h_hat - h) * log(N)
    out["norm_err"] = rep.normalized_error if rep.normalized_error is not None else float("nan")
    return out


def _replicate_task(args):
    process, h, N, filters, seed, rep, oversample, scheme = args
    try:
        z = generate_path(process, h, N, simulate.RngStream(seed, rep), oversample, scheme).values
    except Exception as e:  # noqa: BLE001 - recorded per replicate
        return {spec: ("error", type(e).__name__) for spec in filters}
    res = {}
    for spec in filters:
        try:
            res[spec] = ("ok", replicate_statistics(z, h, parse_filter(spec)))
        except estimator.EstimationError as e:
            res[spec] = ("error", type(e).__name__)
    return res


@dataclass
class McReport:
    config: dict
    cells: list = field(default_factory=list)

    def cell(self, process=None, h=None, n=None, filter=None) -> dict:
        for c in self.cells:
            if ((process is None or c["process"] == process) and (h is None or c["H"] == h)
                    and (n is None or c["N"] == n) and (filter is None or c["filter"] == filter)):
                return c
        raise KeyError((process, h, n, filter))

    def to_dict(self, samples: bool = False) -> dict:
        cells = []
        for c in self.cells:
            c = dict(c)
            if not samples:
                c.pop("samples", None)
            cells.append(c)
        return {"config": self.config, "cells": cells}


def run_montecarlo(config: ExperimentConfig) -> McReport:
    """Replicate ``i`` of every cell uses stream ``(seed, i)``; results are
    reduced in replicate order, so the report does not depend on ``workers``.
    """
    cells = [(h, N) for h in config.hurst for N in config.n]
    tasks = [
        (config.process, h, N, config.filters, config.seed, r, config.oversample, config.scheme)
        for h, N in cells
        for r in range(config.replicates)
    ]
    if config.workers == 1:
        results = [_replicate_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            results = list(ex.map(_replicate_task, tasks, chunksize=max(1, len(tasks) // (4 * config.workers))))
    # runtime-only settings stay out of the report so it is identical for any worker count
    report = McReport({k: v for k, v in asdict(config).items() if k not in ("workers", "out")})
    R = config.replicates
    for ci, (h, N) in enumerate(cells):
        block = results[ci * R : (ci + 1) * R]
        for spec in config.filters:
            samples = {k: [] for k in STATISTICS}
            errors: dict = {}
            for res in block:
                status, val = res[spec]
                if status == "ok":
                    for k in STATISTICS:
                        samples[k].append(val[k])
                else:
                    errors[val] = errors.get(val, 0) + 1
            arrays = {k: np.asarray(v, dtype=float) for k, v in samples.items()}
            report.cells.append({
                "process": config.process,
                "H": h,
                "N": N,
                "filter": spec,
                "replicates": R,
                "ok": R - sum(errors.values()),
                "errors": errors,
                "summary": summarize(arrays),
                "samples": arrays,
            })
    return report


# ---------------------------------------------------------- figure tables


def figure_table(kinds=("fd", "db"), orders=range(1, 21), hurst=(0.55, 0.65, 0.75, 0.85, 0.95), N: int = 10_000,
                 se_at: str = "true", process: str = "rosenblatt", seed: int = 0, oversample: int = 16) -> list[dict]:
    """Rows ``(filter_kind, order, H, std_err)`` of the asymptotic standard error.

    ``se_at = "true"`` evaluates the error at the grid value of H (deterministic);
    ``"estimated"`` simulates one path per cell and plugs in its estimate.
    Orders outside a family's range (fd of order 0, db of order 1) are skipped.
    """
    if se_at not in ("true", "estimated"):
        raise ValueError("se_at must be 'true' or 'estimated'")
    rows = []
    cell = 0
    for kind in kinds:
        for p in orders:
            try:
                filt = finite_difference_filter(p) if kind == "fd" else daubechies_filter(p)
            except (FilterError, ValueError):
                continue
            for h in hurst:
                x = float(h)
                if se_at == "estimated":
                    z = generate_path(process, x, N, simulate.RngStream(seed, cell), oversample).values
                    try:
                        x = estimator.estimate_from_sn(variation.s_n(z, filt), N, filt).h_hat
                    except estimator.OutOfRangeError as e:
                        x = e.report.h_hat
                    x = min(max(x, 0.5 + 1e-9), 1.0 - 1e-9)
                cell += 1
                rows.append({"filter_kind": kind, "order": p, "H": float(h),
                             "std_err": estimator.standard_error(x, N, filt)})
    return rows


def table_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    write_table_csv(rows, buf, ("filter_kind", "order", "H", "std_err"))
    return buf.getvalue()
