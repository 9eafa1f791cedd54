"""Per-round metrics records and their CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

HEADER = ("round", "test_accuracy", "scheduled_count", "scheduled_data_volume",
          "cum_energy_max", "cum_energy_mean", "max_queue", "dpp_objective", "bytes_uploaded")


@dataclass
class MetricsRecord:
    round: int
    test_accuracy: float  # NaN on rounds without evaluation
    scheduled_count: int
    scheduled_data_volume: int
    per_device_cumulative_energy: np.ndarray
    max_queue: float
    dpp_objective: float
    bytes_uploaded: int

    def row(self) -> list[str]:
        cum = self.per_device_cumulative_energy
        return [str(self.round), _fmt(self.test_accuracy), str(self.scheduled_count),
                str(self.scheduled_data_volume), _fmt(float(cum.max())),
                _fmt(float(cum.mean())), _fmt(self.max_queue), _fmt(self.dpp_objective),
                str(self.bytes_uploaded)]


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def format_metrics(records: Sequence[MetricsRecord]) -> str:
    lines = [",".join(HEADER)]
    lines.extend(",".join(r.row()) for r in records)
    return "\n".join(lines) + "\n"


def emit_metrics(records: Sequence[MetricsRecord], path: str | Path) -> Path:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(format_metrics(records))
    return path


def read_metrics(path: str | Path) -> list[dict[str, float]]:
    """Parse a metrics CSV back into one dict of numbers per row."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [{k: float(v) for k, v in row.items()} for row in reader]
