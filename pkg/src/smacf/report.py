"""Run reports: per-epoch trajectories, final metrics, JSON and CSV output.

The JSON form round-trips exactly (``RunReport.from_json(r.to_json()) == r``).
Wall time is tracked on the object but excluded from persisted report files,
which must be bitwise-reproducible from a config file alone; the runner
writes timings to a separate sidecar instead.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field


@dataclass
class RunReport:
    """Everything one training run produced, plus the config that caused it."""

    config: dict
    seed: int
    epochs: list = field(default_factory=list)
    final_metrics: dict = field(default_factory=dict)
    convergence_epoch: int | None = None
    wall_time: float | None = None
    error: str | None = None

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "config": self.config,
            "seed": self.seed,
            "epochs": self.epochs,
            "final_metrics": self.final_metrics,
            "convergence_epoch": self.convergence_epoch,
            "error": self.error,
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(
            config=d["config"],
            seed=d["seed"],
            epochs=d.get("epochs", []),
            final_metrics=d.get("final_metrics", {}),
            convergence_epoch=d.get("convergence_epoch"),
            wall_time=d.get("wall_time"),
            error=d.get("error"),
        )

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))

    def epoch_columns(self) -> list:
        cols = ["epoch"]
        for row in self.epochs:
            for key in row:
                if key not in cols:
                    cols.append(key)
        return cols

    def write_epochs_csv(self, path) -> None:
        """Per-epoch sidecar: one row per epoch, '' for absent fields."""
        cols = self.epoch_columns()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in self.epochs:
                writer.writerow([row.get(c, "") for c in cols])


class Stopwatch:
    """Tiny context manager feeding RunReport.wall_time."""

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        return False
