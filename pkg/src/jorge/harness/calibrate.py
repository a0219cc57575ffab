"""Pick the preconditioner update frequency from measured step times.

Each candidate is timed over a short micro-run on the target problem (forward,
backward and optimizer step together) and compared with SGD by median
per-step time.
"""

from __future__ import annotations

import gc
import math
import itertools
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..bootstrap import DEFAULT_MAX_FREQ, DEFAULT_TARGET_OVERHEAD, SgdBaseline, bootstrap_jorge
from ..optimizers import Optimizer, OptimizerConfig
from ..problems import Problem

CALIBRATION_STEPS = 30
WARMUP_STEPS = 3


def _batch_stream(problem: Problem, seed: int):
    return itertools.chain.from_iterable(problem.batches(seed, e) for e in itertools.count())


def paired_step_times(
    problem: Problem,
    cfgs: Sequence[OptimizerConfig],
    steps: int = CALIBRATION_STEPS,
    seed: int = 0,
    warmup: int = WARMUP_STEPS,
) -> np.ndarray:
    """Wall time in ns of full training iterations, shape ``(len(cfgs), steps)``.

    The optimizers take turns step by step on the same batch stream, so slow
    phases of the machine hit all of them alike and the medians stay comparable.
    """
    opts = [Optimizer(cfg, problem.init_params(seed)) for cfg in cfgs]
    batches = _batch_stream(problem, seed)
    times = np.empty((len(cfgs), steps), dtype=np.int64)
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for k in range(warmup + steps):
            batch = next(batches)
            for i, (cfg, opt) in enumerate(zip(cfgs, opts)):
                start = time.perf_counter_ns()
                _, grads = problem.loss_and_grad(opt.params, batch)
                opt.step(grads, lr=cfg.base_lr)
                elapsed = time.perf_counter_ns() - start
                if k >= warmup:
                    times[i, k - warmup] = elapsed
    finally:
        if gc_was_enabled:
            gc.enable()
    return times


def time_steps(
    problem: Problem,
    cfg: OptimizerConfig,
    steps: int = CALIBRATION_STEPS,
    seed: int = 0,
    warmup: int = WARMUP_STEPS,
) -> np.ndarray:
    """Wall time in ns of each of ``steps`` full training iterations."""
    return paired_step_times(problem, [cfg], steps, seed, warmup)[0]


def median_ratio(problem: Problem, cfg: OptimizerConfig, reference: OptimizerConfig,
                 steps: int = CALIBRATION_STEPS, seed: int = 0) -> tuple[float, float]:
    """Median per-step times (ns) of ``cfg`` and ``reference`` from one paired run."""
    times = paired_step_times(problem, [reference, cfg], steps, seed)
    return float(np.median(times[1])), float(np.median(times[0]))


@dataclass
class CalibrationResult:
    freq: int
    target_overhead: float
    sgd_median_ns: float
    jorge_median_ns: dict[int, float] = field(default_factory=dict)
    sgd_medians_ns: dict[int, float] = field(default_factory=dict)  # paired with each candidate

    @property
    def overheads(self) -> dict[int, float]:
        return {f: t / self.sgd_medians_ns.get(f, self.sgd_median_ns) - 1.0 for f, t in self.jorge_median_ns.items()}

    @property
    def satisfied(self) -> bool:
        return self.overheads.get(self.freq, float("inf")) <= self.target_overhead

    def to_dict(self) -> dict:
        return {
            "precond_freq": self.freq,
            "target_overhead": self.target_overhead,
            "satisfied": self.satisfied,
            "sgd_median_ns": self.sgd_median_ns,
            "sgd_medians_ns": {str(f): t for f, t in self.sgd_medians_ns.items()},
            "jorge_median_ns": {str(f): t for f, t in self.jorge_median_ns.items()},
            "overheads": {str(f): o for f, o in self.overheads.items()},
        }


def calibrate(
    problem: Problem,
    baseline: SgdBaseline,
    target_overhead: float = DEFAULT_TARGET_OVERHEAD,
    steps: int = CALIBRATION_STEPS,
    max_freq: int = DEFAULT_MAX_FREQ,
    seed: int = 0,
) -> CalibrationResult:
    """Smallest power-of-two ``precond_freq`` within ``target_overhead`` of SGD.

    Each candidate gets its own paired micro-run against SGD; the SGD median
    reported is the one from the run of the chosen frequency.
    """
    sgd_cfg = baseline.to_config()
    result = CalibrationResult(0, target_overhead, math.nan)
    sgd_medians: dict[int, float] = {}

    def measure(freq: int) -> float:
        cfg = bootstrap_jorge(baseline, precond_freq=freq)
        jorge_ns, sgd_ns = median_ratio(problem, cfg, sgd_cfg, steps, seed)
        result.jorge_median_ns[freq] = jorge_ns
        sgd_medians[freq] = sgd_ns
        return jorge_ns / sgd_ns - 1.0

    result.freq = bootstrap_jorge(
        baseline, target_overhead, measure_overhead=measure, max_freq=max_freq
    ).precond_freq
    result.sgd_median_ns = sgd_medians[result.freq]
    result.sgd_medians_ns = sgd_medians
    return result
