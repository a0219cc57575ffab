"""Experiment config files: typed ``key = value`` lines under ``[section]`` headers.

Sections::

    [problem]    dataset spec (kind, dim, cond, samples, batch_size, ...)
    [optimizer]  optimizer kind and hyperparameters, including ``lr``
    [sgd]        tuned SGD baseline (lr, momentum, weight_decay) for bootstrapping
    [schedule]   schedule shape (kind, total_epochs, decay_epochs, ...)
    [run]        mode, epochs, target, seeds, trials, output, bootstrap flags

Unknown sections and keys are errors, so a typo never silently falls back to
a default.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

from ..bootstrap import DEFAULT_MAX_FREQ, DEFAULT_TARGET_OVERHEAD, SgdBaseline, bootstrap_jorge
from ..errors import ConfigError
from ..optimizers import OptimizerConfig
from ..problems import DatasetSpec
from ..schedules import ScheduleSpec
from .runner import ExperimentConfig, RunMode


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.replace(",", " ").split())


def _int(text: str) -> int:
    return int(text.strip())


Parser = Callable[[str], object]

SCHEMA: dict[str, dict[str, Parser]] = {
    "problem": {
        "kind": str,
        "dim": _int,
        "cond": float,
        "classes": _int,
        "hidden": _int,
        "samples": _int,
        "eval_samples": _int,
        "batch_size": _int,
        "steps_per_epoch": _int,
        "separable": _bool,
        "seed": _int,
    },
    "optimizer": {
        "kind": str,
        "lr": float,
        "beta1": float,
        "weight_decay": float,
        "decoupled_wd": _bool,
        "epsilon": float,
        "precond_freq": _int,
        "expansion_order": _int,
        "grafting": _bool,
        "adam_beta1": float,
        "adam_beta2": float,
        "adam_eps": float,
        "shampoo_beta2": float,
        "shampoo_ridge": float,
        "symmetrize": _bool,
        "label": str,
    },
    "sgd": {
        "lr": float,
        "momentum": float,
        "weight_decay": float,
    },
    "schedule": {
        "kind": str,
        "total_epochs": _int,
        "decay_epochs": _int_list,
        "decay_factor": float,
        "poly_power": float,
        "warmup_epochs": _int,
    },
    "run": {
        "mode": str,
        "epochs": _int,
        "metric": str,
        "threshold": float,
        "seed": _int,
        "trials": _int,
        "output": str,
        "parallel_trials": _bool,
        "bootstrap": _bool,
        "include_baseline": _bool,
        "calibrate": _bool,
        "target_overhead": float,
        "max_freq": _int,
        "calibration_steps": _int,
    },
}

# What [optimizer] may still set when the Jorge config is derived from [sgd].
BOOTSTRAP_OVERRIDES = ("epsilon", "expansion_order", "symmetrize", "precond_freq", "label")


@dataclass(frozen=True)
class RunConfig:
    """A parsed config file: the main experiment plus optional extras."""

    experiment: ExperimentConfig
    baseline: Optional[ExperimentConfig] = None  # SGD run alongside a bootstrapped one
    calibrate: bool = False
    target_overhead: float = DEFAULT_TARGET_OVERHEAD
    max_freq: int = DEFAULT_MAX_FREQ
    calibration_steps: int = 30
    source: str = "<config>"

    def experiments(self) -> list[ExperimentConfig]:
        return [e for e in (self.baseline, self.experiment) if e is not None]

    def with_overrides(self, *, trials=None, out=None, seed=None) -> "RunConfig":
        changes = {}
        if trials is not None:
            changes["trial_count"] = trials
        if out is not None:
            changes["output_path"] = str(out)
        if seed is not None:
            changes["seed"] = seed
        if not changes:
            return self
        return replace(
            self,
            experiment=replace(self.experiment, **changes),
            baseline=replace(self.baseline, **changes) if self.baseline else None,
        )

    def with_precond_freq(self, freq: int) -> "RunConfig":
        opt = replace(self.experiment.optimizer, precond_freq=freq)
        return replace(self, experiment=replace(self.experiment, optimizer=opt))

    def sgd_baseline(self) -> SgdBaseline:
        """The SGD baseline used for calibration."""
        if self.experiment.sgd_baseline is not None:
            return self.experiment.sgd_baseline
        opt = self.experiment.optimizer
        if opt.kind != "sgd":
            raise ConfigError(f"{self.source}: calibration needs an [sgd] section or an sgd [optimizer]")
        return SgdBaseline(opt.base_lr, opt.beta1, opt.weight_decay, opt.lr_schedule)


def _read_sections(text: str, source: str) -> dict[str, dict[str, object]]:
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), strict=True, default_section="\0"
    )
    parser.optionxform = str  # keys are case-sensitive
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    sections = {}
    for name in parser.sections():
        if name not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{name}]; expected one of {sorted(SCHEMA)}")
        schema = SCHEMA[name]
        values = {}
        for key, raw in parser.items(name):
            if key not in schema:
                raise ConfigError(f"{source}: unknown key {key!r} in [{name}]; known keys: {sorted(schema)}")
            try:
                values[key] = schema[key](raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for [{name}] {key}: {exc}") from None
        sections[name] = values
    return sections


def _schedule(values: dict, lr: float) -> ScheduleSpec:
    if "total_epochs" not in values:
        raise ConfigError("[schedule] needs total_epochs")
    return ScheduleSpec(
        kind=values.get("kind", "constant"),
        base_lr=lr,
        total_epochs=values["total_epochs"],
        decay_epochs=values.get("decay_epochs", ()),
        decay_factor=values.get("decay_factor", 0.1),
        poly_power=values.get("poly_power", 0.9),
        warmup_epochs=values.get("warmup_epochs", 0),
    )


def _optimizer(values: dict, schedule_values: dict) -> OptimizerConfig:
    if "lr" not in values:
        raise ConfigError("[optimizer] needs lr")
    kwargs = {k: v for k, v in values.items() if k not in ("lr", "label", "adam_beta1", "adam_beta2")}
    if "adam_beta1" in values or "adam_beta2" in values:
        kwargs["adam_betas"] = (values.get("adam_beta1", 0.9), values.get("adam_beta2", 0.999))
    return OptimizerConfig(lr_schedule=_schedule(schedule_values, values["lr"]), **kwargs)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    sections = _read_sections(text, source)
    for required in ("problem", "run", "schedule"):
        if required not in sections:
            raise ConfigError(f"{source}: missing [{required}] section")
    try:
        return _build(sections, source)
    except ConfigError as exc:
        if str(exc).startswith(source):
            raise
        raise ConfigError(f"{source}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _build(sections: dict, source: str) -> RunConfig:
    run = sections["run"]
    problem = DatasetSpec(**sections["problem"])
    schedule_values = sections["schedule"]
    epochs = run.get("epochs", schedule_values.get("total_epochs", 1))
    mode = RunMode(run.get("mode", "max_epochs"), epochs, run.get("metric"), run.get("threshold"))
    common = dict(
        problem=problem,
        mode=mode,
        seed=run.get("seed", 0),
        output_path=run.get("output"),
        trial_count=run.get("trials", 1),
        parallel_trials=run.get("parallel_trials", False),
    )

    opt_values = sections.get("optimizer", {})
    bootstrap = run.get("bootstrap", False)
    sgd = None
    if "sgd" in sections:
        sgd_values = sections["sgd"]
        if "lr" not in sgd_values:
            raise ConfigError("[sgd] needs lr")
        sgd = SgdBaseline(
            lr=sgd_values["lr"],
            momentum=sgd_values.get("momentum", 0.9),
            weight_decay=sgd_values.get("weight_decay", 0.0),
            schedule=_schedule(schedule_values, sgd_values["lr"]),
        )

    baseline = None
    if bootstrap:
        if sgd is None:
            raise ConfigError("bootstrap = true needs an [sgd] section")
        extra = sorted(set(opt_values) - set(BOOTSTRAP_OVERRIDES))
        if extra:
            raise ConfigError(f"with bootstrap = true, [optimizer] may only set {BOOTSTRAP_OVERRIDES}; got {extra}")
        overrides = {k: v for k, v in opt_values.items() if k not in ("precond_freq", "label")}
        optimizer = bootstrap_jorge(sgd, precond_freq=opt_values.get("precond_freq", 1), **overrides)
        experiment = ExperimentConfig(
            optimizer=optimizer, sgd_baseline=sgd, bootstrap=True, label=opt_values.get("label"), **common
        )
        if run.get("include_baseline", False):
            baseline = ExperimentConfig(optimizer=sgd.to_config(), sgd_baseline=sgd, label="sgd", **common)
    else:
        if "optimizer" not in sections:
            raise ConfigError("missing [optimizer] section (or set bootstrap = true with an [sgd] section)")
        if run.get("include_baseline", False):
            raise ConfigError("include_baseline needs bootstrap = true")
        experiment = ExperimentConfig(
            optimizer=_optimizer(opt_values, schedule_values), sgd_baseline=sgd, label=opt_values.get("label"),
            **common
        )

    if run.get("calibrate", False) and not bootstrap:
        raise ConfigError("calibrate = true only applies to bootstrapped runs")
    return RunConfig(
        experiment=experiment,
        baseline=baseline,
        calibrate=run.get("calibrate", False),
        target_overhead=run.get("target_overhead", DEFAULT_TARGET_OVERHEAD),
        max_freq=run.get("max_freq", DEFAULT_MAX_FREQ),
        calibration_steps=run.get("calibration_steps", 30),
        source=source,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
