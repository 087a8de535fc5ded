"""Command-line front end.

Exit codes: 0 success, 1 verdict "different" with ``--fail-on-regression``,
2 usage error, 3 runtime failure. ``DUET_LOG`` sets the log level.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from pathlib import Path

from . import __version__, analysis, simgen, workloads
from .harness import HarnessError, run_experiment
from .model import (ArtificialKind, InterferenceModel, Mode, load_config, read_json,
                    samples_from_matrix, samples_from_series, write_json, write_results)

EXIT_OK, EXIT_DIFFERENT, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2, 3

log = logging.getLogger("duetbench")


class UsageError(Exception):
    pass


def cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"bad config {args.config}: {exc}") from exc
    if args.mode:
        d = config.to_dict()
        d["mode"] = args.mode
        config = type(config).from_dict(d)
    result = run_experiment(config, args.out)
    ok = result.ok_runs
    print(f"{len(ok)}/{config.runs} runs succeeded; results in {args.out}")
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_analyze(args) -> int:
    samples_a, samples_b, metadata = analysis.load_results(args.results_dir)
    warmup = args.warmup_fraction
    if warmup is None:
        warmup = metadata.get("config", {}).get("warmup_fraction", 0.0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = analysis.analyze(
            samples_a, samples_b, args.procedure,
            level=args.level, replicates=args.replicates, runs_sample=args.runs_sample,
            seed=args.seed, warmup_fraction=warmup, shuffle_scope=args.shuffle_scope,
            experiment=args.experiment or Path(args.results_dir).resolve().name,
        )
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    text = analysis.render_report(report)
    out_dir = Path(args.out or args.results_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"analysis-{args.procedure}"
    write_json(out_dir / f"{stem}.json", report)
    (out_dir / f"{stem}.txt").write_text(text)
    sys.stdout.write(text)
    if args.fail_on_regression and report["verdict"] == "different":
        return EXIT_DIFFERENT
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        model = InterferenceModel.from_dict(read_json(args.model))
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"bad model {args.model}: {exc}") from exc
    if args.runs < 1 or args.iterations < 1:
        raise UsageError("--runs and --iterations must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.sequential:
        a_runs, b_runs = simgen.replay_standard(model, args.runs, args.iterations, args.seed)
        samples_a, samples_b = samples_from_series(a_runs, b_runs)
    else:
        matrix = simgen.generate(model, args.runs, args.iterations, args.seed)
        samples_a, samples_b = samples_from_matrix(matrix)
    write_results(out / "A.csv", samples_a)
    write_results(out / "B.csv", samples_b)
    write_json(out / "metadata.json", {
        "generator": "simgen.replay_standard" if args.sequential else "simgen.generate",
        "model": model.to_dict(),
        "runs": args.runs,
        "iterations": args.iterations,
        "seed": args.seed,
        "harness_version": __version__,
    })
    print(f"wrote {args.runs} runs x {args.iterations} iterations to {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if not args.target_ms > 0:
        raise UsageError("--target-ms must be > 0")
    cal = workloads.calibrate(args.kind, args.target_ms)
    for step in cal.trace:
        log.info("round %(round)d: count %(count)d -> %(median_ms).2f ms", step)
    print(cal.operation_count)
    return EXIT_OK


def cmd_report(args) -> int:
    reports = []
    for p in args.reports:
        try:
            reports.append(read_json(p))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read report {p}: {exc}") from exc
    try:
        comparison = analysis.compare_reports(reports)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    sys.stdout.write(analysis.render_comparison(comparison))
    if args.csv:
        Path(args.csv).write_text(analysis.comparison_csv(comparison))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="duetbench", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute an experiment configuration")
    r.add_argument("config")
    r.add_argument("--mode", choices=[m.value for m in Mode])
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="compute a confidence interval and verdict")
    a.add_argument("results_dir")
    a.add_argument("--procedure", choices=analysis.PROCEDURES, default="duet")
    a.add_argument("--level", type=float, default=0.99)
    a.add_argument("--replicates", type=int, default=10_000)
    a.add_argument("--runs-sample", type=int, default=analysis.DEFAULT_RUNS_SAMPLE)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--warmup-fraction", type=float, default=None,
                   help="default: the value recorded in metadata.json, else 0")
    a.add_argument("--shuffle-scope", choices=["cross-run", "run", "global"], default="cross-run")
    a.add_argument("--experiment", help="name used in comparison tables")
    a.add_argument("--out", help="directory for the JSON and text report (default: results_dir)")
    a.add_argument("--fail-on-regression", action="store_true")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="generate synthetic measurements")
    s.add_argument("model")
    s.add_argument("--runs", type=int, required=True)
    s.add_argument("--iterations", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--sequential", action="store_true",
                   help="unpaired sequential-style data (no shared interference)")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="find an operation count for a target time")
    c.add_argument("kind", choices=[k.value for k in ArtificialKind])
    c.add_argument("--target-ms", type=float, default=100.0)
    c.set_defaults(func=cmd_calibrate)

    rp = sub.add_parser("report", help="compare analysis reports")
    rp.add_argument("reports", nargs="+")
    rp.add_argument("--csv", help="also write the table as CSV")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DUET_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"duetbench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HarnessError as exc:
        print(f"duetbench: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"duetbench: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
