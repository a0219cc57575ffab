"""Training traces and their on-disk form (CSV per-step rows + JSON sidecar)."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

CSV_COLUMNS = ("step", "epoch", "lr", "train_loss", "wall_ns", "batch_hash", "eig_calls", "invroot_calls")
TIMING_COLUMNS = ("wall_ns",)


class StepRecord(NamedTuple):
    step: int
    epoch: int
    lr: float
    train_loss: float
    wall_ns: int
    batch_hash: str
    eig_calls: int
    invroot_calls: int


class EpochRecord(NamedTuple):
    epoch: int
    metric: float


def batch_hash(batch: Optional[np.ndarray]) -> str:
    """Short digest of the sample indices in a batch (``full`` batches share one)."""
    payload = b"full" if batch is None else np.asarray(batch, dtype="<i8").tobytes()
    return hashlib.blake2b(payload, digest_size=8).hexdigest()


@dataclass
class TrainTrace:
    meta: dict
    steps: list[StepRecord] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    final_params: Optional[list] = field(default=None, repr=False, compare=False)

    @property
    def label(self) -> str:
        return self.meta.get("label", self.meta.get("optimizer", "unknown"))

    def without_timing(self) -> tuple:
        """Everything except wall-clock columns, for determinism checks."""
        rows = tuple(r._replace(wall_ns=0) for r in self.steps)
        summary = {k: v for k, v in self.summary.items() if "wall" not in k and "ns" not in k}
        return rows, tuple(self.epochs), tuple(sorted(summary.items(), key=lambda kv: kv[0]))

    def step_times_ns(self) -> np.ndarray:
        wall = np.array([r.wall_ns for r in self.steps], dtype=np.int64)
        return np.diff(np.concatenate([[0], wall]))

    # -- serialisation ----------------------------------------------------

    def stem(self) -> str:
        return f"{self.label}_trial{self.meta.get('trial', 0)}"

    def write(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"{self.stem()}.csv"
        json_path = out_dir / f"{self.stem()}.json"
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in self.steps:
                writer.writerow([r.step, r.epoch, repr(r.lr), repr(r.train_loss), r.wall_ns, r.batch_hash,
                                 r.eig_calls, r.invroot_calls])
        sidecar = {
            "meta": self.meta,
            "summary": self.summary,
            "epochs": [{"epoch": e.epoch, "metric": e.metric} for e in self.epochs],
            "csv": csv_path.name,
        }
        json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
        return csv_path, json_path

    @classmethod
    def read(cls, json_path) -> "TrainTrace":
        json_path = Path(json_path)
        sidecar = json.loads(json_path.read_text())
        steps = []
        csv_path = json_path.with_name(sidecar.get("csv", json_path.stem + ".csv"))
        if csv_path.exists():
            with csv_path.open(newline="") as fh:
                reader = csv.reader(fh)
                header = tuple(next(reader))
                if header != CSV_COLUMNS:
                    raise ValueError(f"{csv_path}: unexpected columns {header}")
                for row in reader:
                    steps.append(StepRecord(int(row[0]), int(row[1]), float(row[2]), float(row[3]), int(row[4]),
                                            row[5], int(row[6]), int(row[7])))
        epochs = [EpochRecord(int(e["epoch"]), float(e["metric"])) for e in sidecar["epochs"]]
        return cls(sidecar["meta"], steps, epochs, sidecar["summary"])


def load_traces(trace_dir) -> dict[str, list[TrainTrace]]:
    """All traces in a directory, grouped by label and sorted by trial."""
    groups: dict[str, list[TrainTrace]] = {}
    for path in sorted(Path(trace_dir).glob("*.json")):
        trace = TrainTrace.read(path)
        groups.setdefault(trace.label, []).append(trace)
    for traces in groups.values():
        traces.sort(key=lambda t: t.meta.get("trial", 0))
    return groups
