"""Command line entry point: ``rosenhurst <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys

from . import estimator, harness, quadrature, simulate, variation
from .filters import parse_filter

EXIT_ESTIMATION = 2


def _u64(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _orders(s: str) -> list[int]:
    out = []
    for part in s.split(","):
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part.strip():
            out.append(int(part))
    return out


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=_u64, default=d(0), help="64-bit base seed")
    p.add_argument("--workers", type=int, default=d(1), help="worker processes for replicate loops")
    p.add_argument("--out", default=d(None), help="output path (default: stdout)")
    p.add_argument("--config", default=d(None), help="flat 'key = value' file; command-line flags win")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rosenhurst", description="Hurst estimation by filtered quadratic variations.")
    _global_flags(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    p = sub.add_parser("simulate", parents=[common], help="write one sample path as CSV")
    p.add_argument("--process", choices=harness.PROCESSES, default="rosenblatt")
    p.add_argument("--hurst", type=float, default=0.7)
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--oversample", type=int, default=16)
    p.add_argument("--scheme", choices=simulate.SCHEMES, default="matched")
    p.add_argument("--stream-id", type=_u64, default=0)

    p = sub.add_parser("estimate", parents=[common], help="estimate H from a path CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--filter", default="fd:2")
    p.add_argument("--true-hurst", type=float, default=None)

    p = sub.add_parser("constants", parents=[common], help="asymptotic variance constants as JSON")
    p.add_argument("--filter", default="fd:2")
    p.add_argument("--hurst", type=float, default=0.7)
    p.add_argument("--which", default="c2", help="comma list from c2,c1,c3")
    p.add_argument("--n", type=int, default=None, help="sample size entering c3")
    p.add_argument("--kmax", type=int, default=10_000)
    p.add_argument("--nodes", type=int, default=16)
    p.add_argument("--rel-tol", type=float, default=5e-3)
    p.add_argument("--max-depth", type=int, default=10)
    p.add_argument("--trace", action="store_true", help="include truncation traces")

    p = sub.add_parser("figures", parents=[common], help="standard error by filter order (CSV)")
    p.add_argument("--kinds", default="fd,db")
    p.add_argument("--orders", default="1-20")
    p.add_argument("--hurst", default="0.55,0.65,0.75,0.85,0.95")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--se-at", choices=("true", "estimated"), default="true")
    p.add_argument("--process", choices=harness.PROCESSES, default="rosenblatt")
    p.add_argument("--oversample", type=int, default=16)
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("montecarlo", parents=[common], help="replicated estimation experiment (JSON)")
    p.add_argument("--process", choices=harness.PROCESSES, default="rosenblatt")
    p.add_argument("--hurst", default="0.7")
    p.add_argument("--n", default="1024")
    p.add_argument("--filters", default="fd:2", help="filter specs separated by ';' or spaces")
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--oversample", type=int, default=16)
    p.add_argument("--scheme", choices=simulate.SCHEMES, default="matched")
    p.add_argument("--keep-samples", action="store_true")
    return ap


def _explicit_dests(parser: argparse.ArgumentParser, argv: list[str]) -> set:
    flags = {a.split("=", 1)[0] for a in argv if a.startswith("--")}
    seen = set()
    stack = [parser]
    while stack:
        p = stack.pop()
        for act in p._actions:
            if isinstance(act, argparse._SubParsersAction):
                stack.extend(act.choices.values())
            elif flags.intersection(act.option_strings):
                seen.add(act.dest)
    return seen


def _apply_config(parser, args, argv) -> None:
    if not getattr(args, "config", None):
        return
    conf = harness.read_config(args.config)
    explicit = _explicit_dests(parser, argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in list(parser._actions) + list(sub._actions)}
    for key, raw in conf.items():
        if key in explicit or key not in actions or key in ("config", "help", "command"):
            continue
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            val = raw.lower() in ("1", "true", "yes", "on")
        elif act.type is not None:
            val = act.type(raw)
        else:
            val = raw
        if act.choices is not None and val not in act.choices:
            parser.error(f"config key {key!r}: {val!r} not in {list(act.choices)}")
        setattr(args, key, val)


def _emit(text: str, out) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def cmd_simulate(args) -> int:
    stream = simulate.RngStream(args.seed, args.stream_id)
    path = harness.generate_path(args.process, args.hurst, args.n, stream, args.oversample, args.scheme)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            harness.write_path_csv(path, fh)
        meta = {"process": path.process, "H": path.hurst, "N": path.n, "seed": path.seed,
                "stream_id": path.stream_id, "oversample": path.oversample, "scheme": path.scheme, "path": args.out}
        print(harness.to_json("simulate", meta))
    else:
        harness.write_path_csv(path, sys.stdout)
    return 0


def cmd_estimate(args) -> int:
    with open(args.input, newline="") as fh:
        z = harness.read_path_csv(fh)
    filt = parse_filter(args.filter)
    vrep = variation.variation_report(z, filt, args.true_hurst)
    payload = {"variation": vrep.to_dict()}
    code = 0
    try:
        payload["estimate"] = estimator.estimate_hurst(z, filt, args.true_hurst).to_dict()
    except estimator.OutOfRangeError as e:
        payload["estimate"] = e.report.to_dict()
        payload["error"] = {"type": "OutOfRangeError", "message": str(e)}
        code = EXIT_ESTIMATION
    except estimator.DegeneratePathError as e:
        payload["estimate"] = None
        payload["error"] = {"type": "DegeneratePathError", "message": str(e)}
        code = EXIT_ESTIMATION
    _emit(harness.to_json("estimate", payload), args.out)
    return code


def cmd_constants(args) -> int:
    filt = parse_filter(args.filter)
    which = tuple(w.strip() for w in args.which.split(",") if w.strip())
    bad = set(which) - {"c", "c2", "c1", "c3"}
    if bad:
        raise SystemExit(f"unknown constants: {sorted(bad)}")
    policy = quadrature.TruncationPolicy(args.kmax, args.rel_tol, args.nodes, args.max_depth)
    rep = quadrature.constants_report(filt, args.hurst, which, args.n, policy, args.trace)
    _emit(harness.to_json("constants", rep.to_dict()), args.out)
    return 0


def cmd_figures(args) -> int:
    rows = harness.figure_table(
        kinds=tuple(k.strip() for k in args.kinds.split(",") if k.strip()),
        orders=_orders(args.orders),
        hurst=tuple(float(h) for h in args.hurst.split(",")),
        N=args.n,
        se_at=args.se_at,
        process=args.process,
        seed=args.seed,
        oversample=args.oversample,
    )
    if args.format == "json":
        _emit(harness.to_json("figures", {"N": args.n, "se_at": args.se_at, "rows": rows}), args.out)
    else:
        _emit(harness.table_to_csv(rows), args.out)
    return 0


def cmd_montecarlo(args) -> int:
    cfg = harness.ExperimentConfig(
        process=args.process, hurst=args.hurst, n=args.n, filters=args.filters, replicates=args.replicates,
        seed=args.seed, workers=args.workers, out=args.out, oversample=args.oversample, scheme=args.scheme,
        keep_samples=args.keep_samples,
    )
    rep = harness.run_montecarlo(cfg)
    _emit(harness.to_json("montecarlo", rep.to_dict(samples=cfg.keep_samples)), args.out)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "constants": cmd_constants,
    "figures": cmd_figures,
    "montecarlo": cmd_montecarlo,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_config(parser, args, argv)
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, simulate.GenerationError) as e:
        print(f"rosenhurst: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
