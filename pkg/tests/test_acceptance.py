"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -s`` or
``python tests/test_acceptance.py``.  Monte Carlo seeds are fixed.
"""

import io
import sys
import warnings
from contextlib import redirect_stdout
from functools import lru_cache
from math import factorial
from pathlib import Path

import mpmath
import numpy as np
import pytest
from scipy import stats

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES  # noqa: E402

from rosenhurst import analytic, cli, estimator, harness, quadrature, simulate  # noqa: E402
from rosenhurst.filters import daubechies_filter, finite_difference_filter, parse_filter, validate_filter  # noqa: E402

warnings.filterwarnings("ignore", message="order-1 filters")

FD2 = finite_difference_filter(2)
Z1_INTERNAL = 256
N_REF = 2000


def report(num: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {num:2d}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# --------------------------------------------------------------- shared MC


@lru_cache(maxsize=None)
def z1_reference(h: float) -> np.ndarray:
    return np.array([simulate.rosenblatt_z1(h, Z1_INTERNAL, simulate.RngStream(9001, i)) for i in range(N_REF)])


@lru_cache(maxsize=None)
def gauss_reference() -> np.ndarray:
    return simulate.RngStream(9002).generator().standard_normal(N_REF)


@lru_cache(maxsize=None)
def variation_study():
    cfg = harness.ExperimentConfig(process="rosenblatt", hurst=(0.55, 0.6, 0.8), n=(1024, 2048, 4096),
                                   filters=("fd:2",), replicates=500, seed=2024, oversample=8)
    return harness.run_montecarlo(cfg)


@lru_cache(maxsize=None)
def consistency_study(process: str):
    cfg = harness.ExperimentConfig(process=process, hurst=(0.7,), n=(1024, 4096, 16384), filters=("fd:2",),
                                   replicates=500, seed=31337, oversample=8)
    return harness.run_montecarlo(cfg)


# ---------------------------------------------------------------- criteria


def test_criterion_01_filter_identities():
    filters = [finite_difference_filter(l) for l in range(1, 21)] + [daubechies_filter(p) for p in range(2, 21)]
    worst = 0.0
    ok = True
    for f in filters:
        _, diag = validate_filter(f.coeffs)
        worst = max(worst, diag["residual"])
        # relative monomial moments from the exact (integer or 60-digit) taps
        with mpmath.workdps(60):
            for r in range(f.order):
                num = mpmath.fsum(a * mpmath.mpf(q) ** r for q, a in enumerate(f.exact))
                den = mpmath.fsum(abs(a) * mpmath.mpf(q) ** r for q, a in enumerate(f.exact))
                worst = max(worst, float(abs(num) / den))
        if f.kind == "finite_difference":
            ell = f.length
            ok &= abs(sum(a * q**ell for q, a in enumerate(f.exact))) == factorial(ell)
    ok &= worst < 1e-10
    report(1, ok, f"fd:1..20, db:2..20 moment residual max {worst:.2e}; fd leading moments = l! exactly: {ok}")


def test_criterion_02_c_positive():
    xs = np.round(np.arange(1, 101) * 0.01, 2)
    failures = []
    for spec in [f"fd:{l}" for l in range(1, 11)] + [f"db:{p}" for p in range(2, 6)]:
        f = parse_filter(spec)
        for x in xs:
            v = analytic.c_of_H(f, x)
            if not v > 0:
                failures.append(f"{spec}@{x:.2f}={v:.3g}")
        if analytic.c_of_H(f, 0.0) != 0.0:
            failures.append(f"{spec}@0 != 0")
    detail = "c(x) > 0 on the grid, c(0) = 0" if not failures else (
        f"{len(failures)} grid points not positive, e.g. {', '.join(failures[:4])}")
    report(2, not failures, detail)


def test_criterion_03_inversion():
    worst = 0.0
    for spec in ("fd:2", "fd:5", "db:2", "db:4"):
        f = parse_filter(spec)
        for h in np.round(np.arange(51, 100) * 0.01, 2):
            for N in (1000, 10_000):
                sn = analytic.c_of_H(f, h) * float(N) ** (-2 * h) / 2
                worst = max(worst, abs(estimator.estimate_from_sn(sn, N, f).h_hat - h))
    report(3, worst < 1e-8, f"max |H_hat - H| = {worst:.2e} over H = 0.51..0.99, N = 1e3, 1e4")


def test_criterion_04_monotonicity():
    xs = np.linspace(0.5, 1.0, 1000)
    bad = []
    cases = [(parse_filter(s), None) for s in [f"fd:{l}" for l in range(1, 11)] + [f"db:{p}" for p in range(2, 11)]]
    cases.append((FD2, 1000))
    for f, N in cases:
        bound = estimator.monotonicity_bound(f)
        N = N if N is not None else int(np.floor(bound)) + 1
        if N <= bound:
            bad.append(f"{f.label}: N = {N} not above bound {bound:.3g}")
            continue
        sn = analytic.c_of_H(f, 0.7) * float(N) ** -1.4 / 2
        v = np.array([estimator.f_n(x, N, sn, f) for x in xs])
        if not np.all(np.diff(v) < 0):
            bad.append(f"{f.label}@N={N}")
    report(4, not bad, "F_N strictly decreasing beyond the bound (fd:2 bound "
           f"{estimator.monotonicity_bound(FD2):.3g} < 1000)" if not bad else f"violations: {bad}")


def test_criterion_05_kernel_identity():
    rng = np.random.default_rng(55)
    worst = 0.0
    for h in (0.6, 0.8):
        hp = (h + 1) / 2
        for _ in range(20):
            u, v = rng.uniform(0.0, 1.0, 2)
            got = analytic.kernel_inner_product(u, v, hp)
            want = hp * (2 * hp - 1) * abs(u - v) ** (2 * hp - 2)
            worst = max(worst, abs(got / want - 1))
    report(5, worst < 1e-4, f"max relative error {worst:.2e} at 20 random (u, v), H = 0.6, 0.8")


def test_criterion_06_bracket_by_quadrature():
    worst = 0.0
    for spec in ("fd:2", "fd:3", "fd:5", "db:2", "db:4"):
        f = parse_filter(spec)
        for h in (0.6, 0.7, 0.8, 0.9):
            a = analytic.c2_bracket(f, h)
            b = analytic.c2_bracket_by_quadrature(f, h)
            worst = max(worst, abs(b / a - 1))
    report(6, worst < 1e-6, f"closed form vs double-integral quadrature, max relative gap {worst:.2e}")


def test_criterion_07_generator_fidelity():
    n, R = 1 << 14, 100
    msgs, ok = [], True
    for h in (0.55, 0.7, 0.9):
        acov = np.empty((R, 6))
        for r in range(R):
            x = simulate.fgn(h, n, simulate.RngStream(707, r))
            acov[r] = [np.mean(x[: n - k] * x[k:]) for k in range(6)]
        z = np.abs(acov.mean(0) - simulate.fgn_autocovariance(h, np.arange(6))) / (acov.std(0, ddof=1) / np.sqrt(R))
        ok &= bool(np.all(z < 4))
        msgs.append(f"fGn H={h} max |z| {z.max():.2f}")
    h, m, reps = 0.7, 16, 2000
    paths = np.array([simulate.rosenblatt_path(h, 4, m, simulate.RngStream(708, r)).values for r in range(reps)])
    z1sq = paths[:, -1] ** 2
    zvar = abs(z1sq.mean() - 1) / (z1sq.std(ddof=1) / np.sqrt(reps))
    ok &= zvar < 4
    msgs.append(f"Var Z(1) = {z1sq.mean():.3f} ({zvar:.2f} SE)")
    for lag in (1, 2):  # |t - s| = 1/4 and 1/2, all grid increments of that length
        inc = (paths[:, lag:] - paths[:, :-lag]).ravel()
        ratio = np.mean(inc**2) / (lag / 4) ** (2 * h)
        ok &= abs(ratio - 1) < 0.05
        msgs.append(f"incr var ratio at {lag / 4} = {ratio:.3f}")
    report(7, ok, "; ".join(msgs))


def test_criterion_08_mean_of_normalized_sn():
    cfg = harness.ExperimentConfig(process="rosenblatt", hurst=(0.7,), n=(4096,), filters=("fd:2",),
                                   replicates=500, seed=808, oversample=16)
    cell = harness.run_montecarlo(cfg).cells[0]
    ratio = cell["summary"]["scaled_s"]["mean"] / (analytic.c_of_H(FD2, 0.7) / 2)
    report(8, cell["ok"] == 500 and abs(ratio - 1) < 0.05, f"mean N^2H S_N / (c/2) = {ratio:.4f} ({cell['ok']} ok)")


def test_criterion_09_variance_constant():
    rep = variation_study()
    ok, msgs = True, []
    for h in (0.6, 0.8):
        ratios = [np.var(rep.cell(h=h, n=N)["samples"]["scaled_v"], ddof=1) / analytic.c2(FD2, h)
                  for N in (1024, 2048, 4096)]
        dev = np.abs(np.array(ratios) - 1)
        band = 0.6 <= ratios[-1] <= 1.4
        tight = bool(np.all(np.diff(dev) <= 0))
        ok &= band and tight
        msgs.append(f"H={h}: Var/c2 at 2^10,2^11,2^12 = {', '.join(f'{r:.3f}' for r in ratios)}"
                    f" (in band: {band}, tightening: {tight})")
    report(9, ok, "; ".join(msgs))


def test_criterion_10_non_normality():
    h = 0.8
    sv = variation_study().cell(h=h, n=4096)["samples"]["scaled_v"]
    x = sv / np.sqrt(analytic.c2(FD2, h))
    d_ros = harness.ks_two_sample(x, z1_reference(h))
    d_gau = harness.ks_two_sample(x, gauss_reference())
    report(10, d_ros < d_gau, f"KS to Rosenblatt {d_ros:.4f} vs KS to Gaussian {d_gau:.4f}")


def test_criterion_11_adjusted_normality_split():
    rep = variation_study()
    out = {}
    for h in (0.55, 0.8):
        a = rep.cell(h=h, n=4096)["samples"]["adjusted"]
        a = (a - a.mean()) / a.std(ddof=1)
        out[h] = (stats.skew(a), stats.kurtosis(a))
    inside = lambda sk, ku: abs(sk) < 0.35 and abs(ku) < 0.8
    ok = inside(*out[0.55]) and not inside(*out[0.8])
    report(11, ok, "; ".join(f"H={h}: skew {s:.3f}, excess kurtosis {k:.3f}" for h, (s, k) in out.items()))


def test_criterion_12_consistency_rate():
    ok, msgs = True, []
    for process in ("fbm", "rosenblatt"):
        rep = consistency_study(process)
        med = [rep.cell(n=N)["summary"]["abs_h_err_logn"]["median"] for N in (1024, 4096, 16384)]
        dec = bool(np.all(np.diff(med) < 0))
        ok &= dec
        msgs.append(f"{process} median |dH| log N = {', '.join(f'{m:.4f}' for m in med)}")
    ne = consistency_study("rosenblatt").cell(n=4096)["samples"]["norm_err"]
    d_ros = harness.ks_two_sample(ne, z1_reference(0.7))
    d_gau = harness.ks_two_sample(ne, gauss_reference())
    ok &= d_ros < d_gau
    msgs.append(f"normalized error KS to Rosenblatt {d_ros:.4f} vs Gaussian {d_gau:.4f}")
    report(12, ok, "; ".join(msgs))


def test_criterion_13_standard_error_tables():
    hs = tuple(np.round(np.arange(0.55, 0.951, 0.05), 2))
    rows = harness.figure_table(kinds=("fd", "db"), orders=range(1, 21), hurst=hs, N=10_000)
    se = {(r["filter_kind"], r["order"], r["H"]): r["std_err"] for r in rows}
    fd = lambda p, h: se[("fd", p, h)]
    db = lambda p, h: se[("db", p, h)]
    plateau = all(abs(fd(p + 1, h) / fd(p, h) - 1) < 0.01 for h in hs for p in range(15, 20))
    db_dec = all(db(p + 1, h) < db(p, h) for h in hs for p in range(2, 20))
    crossings = {}
    for h in hs:
        below = [p for p in range(2, 21) if db(p, h) < fd(p, h)]
        crossings[h] = below[0] if below else None
    cross_ok = all(c is not None and 6 <= c <= 12 for c in crossings.values())
    inc_h = all(se[(k, p, hs[i + 1])] > se[(k, p, hs[i])]
                for k, ps in (("fd", range(1, 21)), ("db", range(2, 21))) for p in ps for i in range(len(hs) - 1))
    ok = plateau and db_dec and cross_ok and inc_h
    ratio = max(db(p, h) / fd(p, h) for h in hs for p in range(2, 21))
    minratio = min(db(p, h) / fd(p, h) for h in hs for p in range(2, 21))
    report(13, ok, f"fd plateau {plateau}; db decreasing {db_dec}; increasing in H {inc_h}; "
           f"crossover orders {sorted(set(crossings.values()), key=str)} (db/fd ratio range "
           f"{minratio:.4f}..{ratio:.4f})")


def test_criterion_14_truncation_stability():
    base = quadrature.TruncationPolicy(k_max=10_000, nodes_per_dim=16)
    fine = base.doubled()
    worst, msgs = 0.0, []
    for h in (0.55, 0.7):
        a, b = quadrature.c1(FD2, h, base), quadrature.c1(FD2, h, fine)
        dc = abs(b.value / a.value - 1)
        dt = abs(b.tau1.value / a.tau1.value - 1)
        worst = max(worst, dc, dt)
        msgs.append(f"H={h}: c1 {a.value:.6f} (change {dc:.1e}), tau1 {a.tau1.value:.6f} (change {dt:.1e})")
    report(14, worst < 5e-3, "; ".join(msgs))


def _cli_bytes(tmp: Path, tag: str, argv: list[str]) -> bytes:
    out = tmp / f"{tag}.out"
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = cli.main(argv + ["--out", str(out)])
    assert code in (0, cli.EXIT_ESTIMATION)
    return out.read_bytes()


def test_criterion_15_determinism(tmp_path):
    csv = tmp_path / "path.csv"
    with redirect_stdout(io.StringIO()):
        cli.main(["simulate", "--process", "rosenblatt", "--hurst", "0.7", "--n", "1024", "--oversample", "8",
                  "--seed", "123", "--out", str(csv)])
    commands = {
        "simulate": ["simulate", "--process", "rosenblatt", "--hurst", "0.7", "--n", "1024", "--oversample", "8",
                     "--seed", "123"],
        "estimate": ["estimate", "--input", str(csv), "--filter", "db:4", "--true-hurst", "0.7"],
        "constants": ["constants", "--filter", "fd:2", "--hurst", "0.7", "--which", "c2,c1"],
        "figures": ["figures", "--orders", "2-4", "--hurst", "0.6,0.8", "--n", "2048", "--se-at", "estimated",
                    "--oversample", "4", "--seed", "77"],
        "montecarlo": ["montecarlo", "--process", "rosenblatt", "--hurst", "0.6,0.8", "--n", "256",
                       "--filters", "fd:2;db:3", "--replicates", "12", "--oversample", "4", "--seed", "99",
                       "--keep-samples"],
    }
    diffs = []
    for name, argv in commands.items():
        runs = [_cli_bytes(tmp_path, f"{name}{i}", argv + ["--workers", str(w)]) for i, w in enumerate((1, 1, 3))]
        if not (runs[0] == runs[1] == runs[2]):
            diffs.append(name)
    # the CSV written by simulate is byte-identical to the one fed to estimate
    same_csv = _cli_bytes(tmp_path, "again", commands["simulate"]) == csv.read_bytes()
    report(15, not diffs and same_csv, "all subcommands bit-identical across runs and worker counts"
           if not diffs and same_csv else f"differences in {diffs} (csv identical: {same_csv})")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
