"""Experiment harness: configs, training runs, traces, reports and the CLI."""

from .calibrate import CalibrationResult, calibrate, time_steps
from .config import RunConfig, load_config, parse_config
from .report import ComparisonRow, Stat, compare_report, format_report
from .runner import ExperimentConfig, RunMode, run_experiment, run_trial
from .trace import CSV_COLUMNS, EpochRecord, StepRecord, TrainTrace, batch_hash, load_traces

__all__ = [
    "CSV_COLUMNS",
    "CalibrationResult",
    "ComparisonRow",
    "EpochRecord",
    "ExperimentConfig",
    "RunConfig",
    "RunMode",
    "Stat",
    "StepRecord",
    "TrainTrace",
    "batch_hash",
    "calibrate",
    "compare_report",
    "format_report",
    "load_config",
    "load_traces",
    "parse_config",
    "run_experiment",
    "run_trial",
    "time_steps",
]
