"""``churn`` command line: generate data, run one experiment, or run a suite."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from ..baselines import DEFAULT_C
from ..dataset import month_range, parse_month
from ..sampler import SAMPLER_NAMES, SamplerConfig
from .config import load_settings
from .experiment import CLASSIFIER_NAMES, ClassifierConfig, ExperimentConfig, run_experiment, run_suite
from .generator import GeneratorSpec, generate_synthetic
from .report import FORMATS, emit_figure_csv, emit_report

log = logging.getLogger("churnkit")

REPORT_NAMES = {"csv": "report.csv", "markdown": "report.md"}


def _month_span(text: str) -> list[int]:
    first, sep, last = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError("expected FIRST:LAST, e.g. 201505:201512")
    try:
        return month_range(parse_month(first), parse_month(last))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _month(text: str) -> int:
    try:
        return parse_month(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="churn", description="T+2 churn prediction experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write synthetic monthly customer CSVs")
    gen.add_argument("--customers", type=int, default=20000)
    gen.add_argument("--months", type=_month_span, default=month_range(201505, 201512))
    gen.add_argument("--churn-rate", type=float, default=0.07)
    gen.add_argument("--noise", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    data_default = os.environ.get("CHURN_DATA_DIR")
    run = sub.add_parser("run", help="train on one month, test on another")
    run.add_argument("--train-month", type=_month, required=True)
    run.add_argument("--test-month", type=_month, required=True)
    run.add_argument("--sampler", choices=SAMPLER_NAMES, default="none")
    run.add_argument("--classifier", choices=CLASSIFIER_NAMES, default="rf")
    run.add_argument("--cost-sensitive", action="store_true",
                     help="class-weighted forest (same as --classifier rf-cost-sensitive)")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--data", default=data_default, help="data directory (default: $CHURN_DATA_DIR)")
    run.add_argument("--out", required=True)
    run.add_argument("--k-smote", type=int, default=5)
    run.add_argument("--m-borderline", type=int, default=5)
    run.add_argument("--target-ratio", type=float, default=1.0)
    run.add_argument("--trees", type=int, default=100)
    run.add_argument("--svm-c", type=float, default=DEFAULT_C)
    run.add_argument("--format", choices=FORMATS, default="csv")
    run.add_argument("--no-timings", action="store_true", help="leave timing columns empty")

    suite = sub.add_parser("suite", help="run a grid of experiments from a config file")
    suite.add_argument("--config", required=True)
    suite.add_argument("--data", help="overrides data_dir")
    suite.add_argument("--out", help="overrides output_dir")
    suite.add_argument("--seed", type=int)
    suite.add_argument("--trees", type=int)
    suite.add_argument("--svm-c", type=float)
    suite.add_argument("--format", choices=FORMATS)
    suite.add_argument("--n-jobs", type=int)
    suite.add_argument("--no-timings", action="store_true")
    return parser


def _cmd_gen(args) -> int:
    spec = GeneratorSpec(n_customers=args.customers, months=args.months, churn_rate=args.churn_rate,
                         seed=args.seed, noise_level=args.noise)
    paths = generate_synthetic(spec, args.out)
    print(f"wrote {len(paths)} monthly files to {args.out}")
    return 0


def _cmd_run(args) -> int:
    if not args.data:
        raise ValueError("no data directory: pass --data or set CHURN_DATA_DIR")
    classifier = args.classifier
    if args.cost_sensitive:
        if classifier not in ("rf", "rf-cost-sensitive"):
            raise ValueError("--cost-sensitive applies only to the rf classifier")
        classifier = "rf-cost-sensitive"
    cfg = ExperimentConfig(
        data_dir=Path(args.data), train_month=args.train_month, test_month=args.test_month,
        sampler=args.sampler,
        sampler_config=SamplerConfig(args.k_smote, args.m_borderline, args.target_ratio, args.seed),
        classifier=ClassifierConfig(name=classifier, n_trees=args.trees, svm_c=args.svm_c),
        seed=args.seed, output_dir=Path(args.out), record_timings=not args.no_timings)
    row = run_experiment(cfg)
    path = emit_report([row], Path(args.out) / REPORT_NAMES[args.format], args.format)
    print(f"{row.experiment_id}: precision={row.precision} recall={row.recall} "
          f"g_mean={row.g_mean} -> {path}")
    return 0


def _cmd_suite(args) -> int:
    overrides = {
        "data_dir": args.data, "output_dir": args.out, "seed": args.seed, "trees": args.trees,
        "svm_c": args.svm_c, "format": args.format, "n_jobs": args.n_jobs,
        "timings": False if args.no_timings else None,
    }
    defaults = {"data_dir": os.environ["CHURN_DATA_DIR"]} if os.environ.get("CHURN_DATA_DIR") else {}
    settings = load_settings(args.config, overrides, defaults)
    if settings.format not in FORMATS:
        raise ValueError(f"unknown report format {settings.format!r}")
    rows = run_suite(settings.experiments(), n_jobs=settings.n_jobs)
    out = Path(settings.output_dir)
    path = emit_report(rows, out / REPORT_NAMES[settings.format], settings.format)
    emit_figure_csv(rows, out / "figure_averages.csv")
    failed = [r for r in rows if not r.ok and r.train_month != "average"]
    print(f"{len(rows)} rows -> {path}")
    if failed:
        print(f"churn: error: {len(failed)} of {len(settings.experiments())} runs failed; "
              f"first: {failed[0].experiment_id}: {failed[0].status}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {"gen": _cmd_gen, "run": _cmd_run, "suite": _cmd_suite}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"churn: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
