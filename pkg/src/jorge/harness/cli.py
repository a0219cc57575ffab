"""Command-line entry point: ``jorge run|compare|calibrate``.

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 target not reached.
Set ``JORGE_MAX_THREADS`` to cap the worker threads used for concurrent trials
and per-layer optimizer steps.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from .. import __version__
from ..errors import ConfigError, NumericError
from ..problems import build_problem
from .calibrate import calibrate
from .config import RunConfig, load_config
from .report import compare_report, format_report
from .runner import run_experiment
from .trace import load_traces

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_NOT_REACHED = 4

log = logging.getLogger("jorge")


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jorge", description="Jorge optimizer experiment harness.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train according to a config file and write traces")
    run.add_argument("config", help="path to the experiment config")
    run.add_argument("--trials", type=_positive, help="number of trials (seeds seed, seed+1, ...)")
    run.add_argument("--out", help="directory for CSV/JSON traces")
    run.add_argument("--seed", type=int, help="base seed for trials")

    compare = sub.add_parser("compare", help="summarise a directory of traces")
    compare.add_argument("trace_dir")
    compare.add_argument("--baseline", default="sgd", help="label that ratios are relative to")

    cal = sub.add_parser("calibrate", help="pick precond_freq from measured step times")
    cal.add_argument("config", help="path to the experiment config")
    return parser


def _calibrated(cfg: RunConfig) -> RunConfig:
    if not cfg.calibrate:
        return cfg
    result = calibrate(
        build_problem(cfg.experiment.problem),
        cfg.sgd_baseline(),
        cfg.target_overhead,
        steps=cfg.calibration_steps,
        max_freq=cfg.max_freq,
        seed=cfg.experiment.seed,
    )
    log.info("calibrated precond_freq=%d (overheads %s)", result.freq, result.overheads)
    return cfg.with_precond_freq(result.freq)


def cmd_run(args) -> int:
    cfg = load_config(args.config).with_overrides(trials=args.trials, out=args.out, seed=args.seed)
    cfg = _calibrated(cfg)
    status = EXIT_OK
    for experiment in cfg.experiments():
        traces = run_experiment(experiment)
        for trace in traces:
            summary = trace.summary
            print(
                f"{trace.label} trial {trace.meta['trial']}: {summary['status']}"
                f" best={summary['best_metric']} epochs={summary['epochs_run']}"
                + (f" error={summary['error']}" if summary["error"] else "")
            )
            if summary["status"] == "failed":
                status = EXIT_NUMERIC
            elif summary["status"] == "not_reached" and status == EXIT_OK:
                status = EXIT_NOT_REACHED
    return status


def cmd_compare(args) -> int:
    traces = load_traces(args.trace_dir)
    if not traces:
        raise ConfigError(f"no traces found in {args.trace_dir}")
    print(format_report(compare_report(traces, args.baseline)))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    result = calibrate(
        build_problem(cfg.experiment.problem),
        cfg.sgd_baseline(),
        cfg.target_overhead,
        steps=cfg.calibration_steps,
        max_freq=cfg.max_freq,
        seed=cfg.experiment.seed,
    )
    print(json.dumps(result.to_dict(), indent=2))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "calibrate": cmd_calibrate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which matches the config-error code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
