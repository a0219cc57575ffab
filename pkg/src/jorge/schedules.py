"""Learning-rate schedules indexed by (epoch, fraction of the epoch)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError

SCHEDULE_KINDS = ("constant", "step_decay", "cosine", "polynomial")


@dataclass(frozen=True)
class ScheduleSpec:
    """A base schedule, optionally preceded by a linear warmup.

    ``warmup_epochs > 0`` wraps the base schedule: during warmup the rate
    climbs linearly from ``base_lr / warmup_epochs`` towards the base
    schedule's value, which it then follows.
    """

    kind: str = "constant"
    base_lr: float = 0.1
    total_epochs: int = 1
    decay_epochs: tuple[int, ...] = field(default_factory=tuple)
    decay_factor: float = 0.1
    poly_power: float = 0.9
    warmup_epochs: int = 0

    def __post_init__(self):
        object.__setattr__(self, "decay_epochs", tuple(int(e) for e in self.decay_epochs))
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}; expected one of {SCHEDULE_KINDS}")
        if not (self.base_lr > 0 and math.isfinite(self.base_lr)):
            raise ConfigError(f"base_lr must be positive and finite, got {self.base_lr}")
        if self.total_epochs < 1:
            raise ConfigError(f"total_epochs must be >= 1, got {self.total_epochs}")
        if self.warmup_epochs < 0:
            raise ConfigError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")
        if self.kind == "step_decay":
            epochs = self.decay_epochs
            if any(b <= a for a, b in zip(epochs, epochs[1:])):
                raise ConfigError(f"decay_epochs must be strictly increasing, got {list(epochs)}")
            if epochs and (epochs[0] < 0 or epochs[-1] >= self.total_epochs):
                raise ConfigError(f"decay_epochs must lie in [0, {self.total_epochs}), got {list(epochs)}")
            if not 0 < self.decay_factor < 1:
                raise ConfigError(f"decay_factor must be in (0, 1), got {self.decay_factor}")
        if self.kind == "polynomial" and not self.poly_power > 0:
            raise ConfigError(f"poly_power must be positive, got {self.poly_power}")


def _base_rate(spec: ScheduleSpec, epoch: int, frac: float) -> float:
    if spec.kind == "constant":
        return spec.base_lr
    if spec.kind == "step_decay":
        passed = sum(1 for e in spec.decay_epochs if epoch >= e)
        return spec.base_lr * spec.decay_factor**passed
    progress = (epoch + frac) / spec.total_epochs
    if spec.kind == "cosine":
        return spec.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
    return spec.base_lr * (1.0 - progress) ** spec.poly_power


def lr_at(spec: ScheduleSpec, epoch: int, step_in_epoch: float = 0.0) -> float:
    """Learning rate at ``epoch`` (0-based) and fractional position within it."""
    if not 0 <= epoch < spec.total_epochs:
        raise ConfigError(f"epoch {epoch} outside schedule range [0, {spec.total_epochs})")
    if not 0.0 <= step_in_epoch < 1.0:
        raise ConfigError(f"step_in_epoch must be in [0, 1), got {step_in_epoch}")
    rate = _base_rate(spec, epoch, step_in_epoch)
    warm = spec.warmup_epochs
    if warm > 0 and epoch + step_in_epoch < warm:
        start = 1.0 / warm
        rate *= start + (1.0 - start) * (epoch + step_in_epoch) / warm
    return rate
