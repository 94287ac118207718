"""Solver results and convergence traces."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import Placement

TRACE_COLUMNS = ("iteration", "z", "best_z", "z1", "z2", "best_z2")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    z: float
    best_z: float
    z1: float
    z2: float
    best_z2: float


@dataclass
class SolveReport:
    solver: str
    placement: Placement | None  # None when nothing is placed (empty online cluster)
    z: float
    z1: float
    z2: float
    trace: list[TraceRow] = field(default_factory=list)
    seed: int | None = None
    wall_time: float = 0.0  # seconds
    ga_history: list[float] = field(default_factory=list)  # best stage-1 fitness per generation
    params: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)  # solver-specific objects, not serialized

    @property
    def k_active(self) -> int:
        return 0 if self.placement is None else self.placement.k_active

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "solver": self.solver,
            "seed": self.seed,
            "params": self.params,
            "z": self.z,
            "z1": self.z1,
            "z2": self.z2,
            "k_active": self.k_active,
            "assign": [] if self.placement is None else [int(i) for i in self.placement.assign],
            "ga_history": list(self.ga_history),
            "trace": [[getattr(r, c) for c in TRACE_COLUMNS] for r in self.trace],
        }
        if include_timing:
            out["wall_time_min"] = round(self.wall_time / 60.0, 4)
        return out

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"


def trace_csv(report: SolveReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in report.trace:
        w.writerow([r.iteration] + [repr(float(getattr(r, c))) for c in TRACE_COLUMNS[1:]])
    return buf.getvalue()


def emit_trace(report: SolveReport, path: str | Path) -> None:
    """Write the per-iteration trace as CSV (columns: ``TRACE_COLUMNS``)."""
    Path(path).write_text(trace_csv(report), encoding="utf-8")


class TraceRecorder:
    """Accumulates trace rows, keeping the best-so-far by ``z``."""

    def __init__(self):
        self.rows: list[TraceRow] = []
        self.best_z = float("-inf")
        self.best_z2 = float("nan")

    def record(self, iteration: int, z1: float, z2: float, z: float) -> bool:
        improved = z > self.best_z
        if improved:
            self.best_z, self.best_z2 = z, z2
        self.rows.append(TraceRow(iteration, z, self.best_z, z1, z2, self.best_z2))
        return improved
