"""Experiment execution: train for a budget or until a metric target is met."""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..bootstrap import SgdBaseline, bootstrap_jorge
from ..errors import ConfigError, JorgeError, NumericError
from ..optimizers import Optimizer, OptimizerConfig
from ..problems import DatasetSpec, Problem, build_problem
from .trace import EpochRecord, StepRecord, TrainTrace, batch_hash

log = logging.getLogger(__name__)

MODES = ("max_epochs", "to_target")
THREADS_ENV = "JORGE_MAX_THREADS"


@dataclass(frozen=True)
class RunMode:
    kind: str = "max_epochs"
    epochs: int = 1  # budget for max_epochs, cap for to_target
    metric: Optional[str] = None
    threshold: Optional[float] = None

    def __post_init__(self):
        if self.kind not in MODES:
            raise ConfigError(f"unknown run mode {self.kind!r}; expected one of {MODES}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.kind == "to_target" and self.threshold is None:
            raise ConfigError("to_target mode needs a threshold")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: DatasetSpec
    mode: RunMode
    optimizer: Optional[OptimizerConfig] = None
    sgd_baseline: Optional[SgdBaseline] = None
    bootstrap: bool = False
    seed: int = 0
    output_path: Optional[str] = None
    trial_count: int = 1
    label: Optional[str] = None
    parallel_trials: bool = False

    def __post_init__(self):
        if self.trial_count < 1:
            raise ConfigError(f"trial_count must be >= 1, got {self.trial_count}")
        if self.bootstrap and self.sgd_baseline is None:
            raise ConfigError("bootstrap needs an SGD baseline")
        if self.optimizer is None:
            if not self.bootstrap:
                raise ConfigError("an optimizer config is required unless bootstrapping from SGD")
            object.__setattr__(self, "optimizer", bootstrap_jorge(self.sgd_baseline))

    def resolved_label(self) -> str:
        return self.label or self.optimizer.kind


def max_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer") from None


def run_trial(
    problem: Problem,
    opt_cfg: OptimizerConfig,
    mode: RunMode,
    seed: int,
    *,
    trial: int = 0,
    label: Optional[str] = None,
    keep_params: bool = False,
    max_workers: int = 1,
) -> TrainTrace:
    """One training run.  Numeric failures end the trace with a failure record."""
    if mode.epochs > opt_cfg.lr_schedule.total_epochs:
        raise ConfigError(
            f"run needs {mode.epochs} epochs but the schedule only covers {opt_cfg.lr_schedule.total_epochs}"
        )
    metric_name = mode.metric or problem.default_metric
    meta = {
        "label": label or opt_cfg.kind,
        "optimizer": opt_cfg.kind,
        "problem": problem.name,
        "trial": trial,
        "seed": seed,
        "mode": mode.kind,
        "metric": metric_name,
        "threshold": mode.threshold,
        "precond_freq": opt_cfg.precond_freq,
        "base_lr": opt_cfg.base_lr,
    }
    trace = TrainTrace(meta)
    names = [f"layer{i}" for i in range(len(problem.layer_shapes))]
    opt = Optimizer(opt_cfg, problem.init_params(seed), names, max_workers=max_workers)
    status, error = "completed", None
    start = time.monotonic_ns()
    step = 0
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            for epoch in range(mode.epochs):
                batches = problem.batches(seed, epoch)
                for i, batch in enumerate(batches):
                    step += 1
                    loss, grads = problem.loss_and_grad(opt.params, batch)
                    if not math.isfinite(loss):
                        raise NumericError(f"non-finite training loss at step {step}")
                    reports = opt.step(grads, epoch, i / len(batches))
                    trace.steps.append(
                        StepRecord(
                            step,
                            epoch,
                            reports[0].lr_used,
                            loss,
                            time.monotonic_ns() - start,
                            batch_hash(batch),
                            sum(r.op_counts.get("sym_eig", 0) for r in reports),
                            sum(r.op_counts.get("exact_inv_root", 0) for r in reports),
                        )
                    )
                metric = problem.metric(opt.params, metric_name)
                trace.epochs.append(EpochRecord(epoch, metric))
                if mode.kind == "to_target" and metric >= mode.threshold:
                    status = "reached"
                    break
            else:
                if mode.kind == "to_target":
                    status = "not_reached"
    except (JorgeError, FloatingPointError) as exc:
        status, error = "failed", f"step {step}: {exc}"
        log.warning("%s trial %d failed: %s", meta["label"], trial, error)
    finally:
        opt.close()

    trace.summary = summarise(trace, status, error)
    if keep_params:
        trace.final_params = [p.copy() for p in opt.params]
    return trace


def summarise(trace: TrainTrace, status: str, error: Optional[str] = None) -> dict:
    metrics = [e.metric for e in trace.epochs]
    summary = {
        "status": status,
        "steps": len(trace.steps),
        "epochs_run": len(trace.epochs),
        "best_metric": max(metrics) if metrics else None,
        "final_metric": metrics[-1] if metrics else None,
        "total_wall_ns": trace.steps[-1].wall_ns if trace.steps else 0,
        "target_epoch": None,
        "epochs_to_target": None,
        "wall_ns_to_target": None,
        "error": error,
    }
    threshold = trace.meta.get("threshold")
    if trace.meta.get("mode") == "to_target" and threshold is not None:
        hit = next((e.epoch for e in trace.epochs if e.metric >= threshold), None)
        if hit is not None:
            last_step = max(r.wall_ns for r in trace.steps if r.epoch <= hit)
            summary.update(target_epoch=hit, epochs_to_target=hit + 1, wall_ns_to_target=last_step)
    return summary


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> list[TrainTrace]:
    """All trials of an experiment; writes CSV/JSON traces when ``output_path`` is set."""
    problem = build_problem(cfg.problem)
    opt_cfg = cfg.optimizer
    label = cfg.resolved_label()

    threads = max_threads()
    workers = min(cfg.trial_count, threads) if cfg.parallel_trials else 1
    layer_workers = max(1, threads // workers)

    def one(k: int) -> TrainTrace:
        trace = run_trial(problem, opt_cfg, cfg.mode, cfg.seed + k, trial=k, label=label, max_workers=layer_workers)
        if write and cfg.output_path:
            trace.write(cfg.output_path)
        return trace

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, range(cfg.trial_count)))
    return [one(k) for k in range(cfg.trial_count)]


def with_optimizer(cfg: ExperimentConfig, optimizer: OptimizerConfig, label: Optional[str] = None) -> ExperimentConfig:
    return replace(cfg, optimizer=optimizer, bootstrap=False, label=label)
