"""Single-shot derivation of Jorge hyperparameters from a tuned SGD baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

from .errors import ConfigError
from .optimizers import OptimizerConfig
from .schedules import ScheduleSpec

DEFAULT_TARGET_OVERHEAD = 0.10
DEFAULT_MAX_FREQ = 256


@dataclass(frozen=True)
class SgdBaseline:
    lr: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    schedule: Optional[ScheduleSpec] = None
    total_epochs: Optional[int] = None

    def __post_init__(self):
        if self.total_epochs is None:
            if self.schedule is None:
                raise ConfigError("SgdBaseline needs total_epochs or a schedule")
            object.__setattr__(self, "total_epochs", self.schedule.total_epochs)
        if self.schedule is None:
            object.__setattr__(self, "schedule", ScheduleSpec("constant", self.lr, self.total_epochs))
        for label in ("lr", "momentum", "weight_decay"):
            if not math.isfinite(getattr(self, label)):
                raise ConfigError(f"{label} must be finite")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"SGD momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.total_epochs < 1:
            raise ConfigError(f"total_epochs must be >= 1, got {self.total_epochs}")

    def to_config(self, **overrides) -> OptimizerConfig:
        """The SGD optimizer this baseline describes (coupled L2, heavy ball)."""
        schedule = replace(self.schedule, base_lr=self.lr, total_epochs=self.total_epochs)
        return OptimizerConfig(
            kind="sgd",
            lr_schedule=schedule,
            beta1=self.momentum,
            weight_decay=self.weight_decay,
            decoupled_wd=False,
            **overrides,
        )


def effective_wd_contribution(beta: float, lam: float, horizon: int) -> float:
    """Total weight-decay pull of one step once heavy-ball momentum has carried it
    ``horizon`` steps: ``lam * (1 - beta^horizon) / (1 - beta)``."""
    if beta == 0.0:
        return lam
    return lam * (1.0 - beta**horizon) / (1.0 - beta)


def jorge_weight_decay(sgd_weight_decay: float, sgd_momentum: float) -> float:
    if sgd_momentum >= 1.0:
        raise ConfigError("SGD momentum of 1 makes the weight-decay transfer undefined")
    return sgd_weight_decay / (1.0 - sgd_momentum)


def thirds_schedule(base: ScheduleSpec, lr: float, total_epochs: int) -> ScheduleSpec:
    """Step decay by 10x at one and two thirds of training, keeping any warmup."""
    marks = sorted({total_epochs // 3, (2 * total_epochs) // 3} - {0})
    return ScheduleSpec(
        kind="step_decay",
        base_lr=lr,
        total_epochs=total_epochs,
        decay_epochs=tuple(marks),
        decay_factor=0.1,
        warmup_epochs=base.warmup_epochs,
    )


def choose_precond_freq(
    measure_overhead: Callable[[int], float],
    target_iter_overhead: float = DEFAULT_TARGET_OVERHEAD,
    max_freq: int = DEFAULT_MAX_FREQ,
) -> int:
    """Smallest power-of-two frequency whose measured overhead meets the target.

    ``measure_overhead(freq)`` returns Jorge's per-step time relative to SGD
    minus one.  Falls back to ``max_freq`` when no candidate qualifies.
    """
    freq = 1
    while freq <= max_freq:
        if measure_overhead(freq) <= target_iter_overhead:
            return freq
        freq *= 2
    return max_freq


def bootstrap_jorge(
    sgd: SgdBaseline,
    target_iter_overhead: float = DEFAULT_TARGET_OVERHEAD,
    *,
    measure_overhead: Optional[Callable[[int], float]] = None,
    precond_freq: int = 1,
    max_freq: int = DEFAULT_MAX_FREQ,
    **overrides,
) -> OptimizerConfig:
    """Jorge config from a tuned SGD run.

    * the learning rate is borrowed through SGD grafting;
    * decoupled weight decay is ``lambda_SGD / (1 - beta_SGD)``;
    * the schedule becomes step decay at T/3 and 2T/3, whatever SGD used;
    * the momentum coefficient is SGD's.

    With ``measure_overhead`` the preconditioner frequency is calibrated,
    otherwise ``precond_freq`` is used as given.
    """
    if not target_iter_overhead >= 0:
        raise ConfigError(f"target_iter_overhead must be >= 0, got {target_iter_overhead}")
    if measure_overhead is not None:
        precond_freq = choose_precond_freq(measure_overhead, target_iter_overhead, max_freq)
    return OptimizerConfig(
        kind="jorge",
        lr_schedule=thirds_schedule(sgd.schedule, sgd.lr, sgd.total_epochs),
        beta1=sgd.momentum,
        weight_decay=jorge_weight_decay(sgd.weight_decay, sgd.momentum),
        decoupled_wd=True,
        precond_freq=precond_freq,
        grafting=True,
        **overrides,
    )
