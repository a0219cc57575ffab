"""Cross-optimizer summary: mean +- std of best metric and time-to-target."""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from ..errors import ConfigError
from .trace import TrainTrace


@dataclass(frozen=True)
class Stat:
    mean: float
    std: float  # population std, so a single trial gives 0
    count: int

    def __str__(self) -> str:
        return f"{self.mean:.6g} ± {self.std:.3g}"


def _stat(values: Sequence[float]) -> Optional[Stat]:
    values = [float(v) for v in values if v is not None]
    if not values:
        return None
    return Stat(statistics.fmean(values), statistics.pstdev(values), len(values))


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    trials: int
    reached: int
    best_metric: Optional[Stat]
    epochs_to_target: Optional[Stat]
    wall_s_to_target: Optional[Stat]
    epoch_ratio: Optional[float] = None  # vs. the baseline row
    wall_ratio: Optional[float] = None

    @property
    def converged(self) -> bool:
        return self.reached == self.trials


def compare_report(traces: Mapping[str, Sequence[TrainTrace]], baseline: str = "sgd") -> list[ComparisonRow]:
    """One row per optimizer label.  Ratios are relative to ``baseline`` when present.

    Epochs- and wall-time-to-target are averaged over the trials that reached
    the target; ``reached`` says how many did.
    """
    if len(traces) < 2:
        raise ConfigError(f"need at least two optimizers to compare, got {len(traces)}")
    counts = {label: len(ts) for label, ts in traces.items()}
    if len(set(counts.values())) != 1:
        raise ConfigError(f"optimizers have different trial counts: {counts}")

    rows = {}
    for label, ts in traces.items():
        summaries = [t.summary for t in ts]
        wall = [s["wall_ns_to_target"] / 1e9 for s in summaries if s.get("wall_ns_to_target") is not None]
        rows[label] = ComparisonRow(
            label=label,
            trials=len(ts),
            reached=sum(1 for s in summaries if s.get("epochs_to_target") is not None),
            best_metric=_stat([s.get("best_metric") for s in summaries]),
            epochs_to_target=_stat([s.get("epochs_to_target") for s in summaries]),
            wall_s_to_target=_stat(wall),
        )

    base = rows.get(baseline)
    out = []
    for label, row in rows.items():
        if base is not None:
            row = ComparisonRow(
                **{
                    **row.__dict__,
                    "epoch_ratio": _ratio(row.epochs_to_target, base.epochs_to_target),
                    "wall_ratio": _ratio(row.wall_s_to_target, base.wall_s_to_target),
                }
            )
        out.append(row)
    out.sort(key=lambda r: (r.label != baseline, r.label))
    return out


def _ratio(a: Optional[Stat], b: Optional[Stat]) -> Optional[float]:
    if a is None or b is None or b.mean == 0:
        return None
    return a.mean / b.mean


def format_report(rows: Sequence[ComparisonRow]) -> str:
    header = ("optimizer", "trials", "reached", "best metric", "epochs to target", "wall s to target",
              "epoch ratio", "wall ratio")
    lines = [header]
    for r in rows:
        lines.append((
            r.label,
            str(r.trials),
            str(r.reached),
            str(r.best_metric) if r.best_metric else "-",
            str(r.epochs_to_target) if r.epochs_to_target else "did not converge",
            str(r.wall_s_to_target) if r.wall_s_to_target else "-",
            f"{r.epoch_ratio:.3f}" if r.epoch_ratio is not None else "-",
            f"{r.wall_ratio:.3f}" if r.wall_ratio is not None else "-",
        ))
    widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in lines)
