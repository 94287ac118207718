"""Experiment engine: replications, the L16 parameter sweep, solver comparison
and online-stream runs.  Everything emits plain CSV/JSON.

CSV schemas (header row first, floats written with ``repr``):

* replicates: ``REPLICATE_COLUMNS``; one row per replicate, then a row whose
  ``row`` field is ``summary`` carrying min/max/mean/std of z.
* sweep: ``SWEEP_COLUMNS``, one row per (case, L); main effects:
  ``EFFECT_COLUMNS``.
* compare: ``COMPARE_COLUMNS``, one row per (L, solver).
* online: ``ONLINE_COLUMNS``, one row per (slot, solver).

Wall-time columns are in minutes (4 decimals) and are the only
nondeterministic fields; pass ``include_timing=False`` to leave them blank.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import BaselineParams, run_first_fit_greedy, run_ga_baseline, run_nsga2
from .ga import GAParams
from .mao import MAOParams, run_hmao
from .model import InstanceError, Scenario, evaluate
from .online import SlotEvent, replay
from .report import SolveReport, TraceRecorder, emit_trace
from .scenario import STANDARD_NODE, load_scenario, make_scenario

SOLVERS = ("hmao", "ga", "nsga2", "greedy")

REPLICATE_COLUMNS = ("row", "seed", "solver", "z", "z1", "z2", "k_active", "min", "max", "mean", "std",
                     "wall_time_min")
SWEEP_COLUMNS = ("case", "p_s", "p_e", "M", "L", "min", "max", "mean", "std")
EFFECT_COLUMNS = ("L", "factor", "level", "mean_z")
COMPARE_COLUMNS = ("L", "solver", "min", "max", "mean", "std", "mean_z1", "mean_z2", "time_min")
ONLINE_COLUMNS = ("slot", "solver", "z", "z1", "z2", "k_active", "live_tasks")

# Table of the L16(4^3) orthogonal design: (p_s, p_e, M) per case.
_L16 = (
    (0.01, 0.01, 250), (0.01, 0.05, 500), (0.01, 0.10, 750), (0.01, 0.15, 1000),
    (0.05, 0.01, 500), (0.05, 0.05, 250), (0.05, 0.10, 1000), (0.05, 0.15, 750),
    (0.10, 0.01, 750), (0.10, 0.05, 1000), (0.10, 0.10, 250), (0.10, 0.15, 500),
    (0.15, 0.01, 1000), (0.15, 0.05, 750), (0.15, 0.10, 500), (0.15, 0.15, 250),
)


def taguchi_l16() -> list[tuple[float, float, int]]:
    return list(_L16)


@dataclass(frozen=True)
class ExperimentConfig:
    """What to run: solver, instance, parameters, replication count, base seed.

    The instance is a scenario file when ``scenario`` is set, otherwise
    ``tasks`` standard tasks on ``nodes`` standard nodes (default: as many
    nodes as tasks).
    """

    solver: str = "hmao"
    scenario: str | None = None
    tasks: int = 8
    nodes: int | None = None
    ga: GAParams = field(default_factory=GAParams)
    mao: MAOParams = field(default_factory=MAOParams)
    baseline: BaselineParams = field(default_factory=BaselineParams)
    replications: int = 10
    base_seed: int = 0

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.scenario is not None and not Path(self.scenario).is_file():
            raise InstanceError(f"scenario file {self.scenario} not found")

    def load(self) -> Scenario:
        if self.scenario is not None:
            return load_scenario(self.scenario)
        return make_scenario(self.tasks, self.nodes or self.tasks)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["nodes"] = self.nodes or (None if self.scenario else self.tasks)
        return out


@dataclass(frozen=True)
class ReplicationStats:
    n: int
    min: float
    max: float
    mean: float
    std: float  # population standard deviation
    mean_wall_time: float  # seconds

    @classmethod
    def from_reports(cls, reports: Sequence[SolveReport]) -> "ReplicationStats":
        if not reports:
            raise ValueError("no reports to summarise")
        z = np.array([r.z for r in reports], dtype=float)
        lo, hi = float(z.min()), float(z.max())
        std = float(z.std()) if hi > lo else 0.0
        mean = min(max(math.fsum(z) / len(z), lo), hi)  # guard against rounding past the extremes
        return cls(len(z), lo, hi, mean, std,
                   math.fsum(r.wall_time for r in reports) / len(reports))


class ReplicationError(InstanceError):
    """A replicate failed; ``reports`` holds the replicates that finished."""

    def __init__(self, message: str, reports: list[SolveReport]):
        super().__init__(message)
        self.reports = reports


def solve(s: Scenario, config: ExperimentConfig, seed: int) -> SolveReport:
    """One run of ``config.solver`` on ``s`` with a fresh generator."""
    rng = np.random.default_rng(seed)
    if config.solver == "hmao":
        return run_hmao(s, config.ga, config.mao, rng, seed)
    if config.solver == "ga":
        return run_ga_baseline(s, config.baseline, rng, seed)
    if config.solver == "nsga2":
        return run_nsga2(s, config.baseline, rng, seed)
    started = time.perf_counter()
    placement = run_first_fit_greedy(s)
    z1, z2, z = evaluate(placement, s)
    rec = TraceRecorder()
    rec.record(0, z1, z2, z)
    return SolveReport("greedy", placement, z, z1, z2, rec.rows, seed, time.perf_counter() - started)


def run_replications(config: ExperimentConfig, s: Scenario | None = None
                     ) -> tuple[ReplicationStats, list[SolveReport]]:
    """Replicate ``r`` runs with seed ``base_seed + r``."""
    s = config.load() if s is None else s
    reports: list[SolveReport] = []
    for r in range(config.replications):
        try:
            reports.append(solve(s, config, config.base_seed + r))
        except InstanceError as exc:
            raise ReplicationError(f"replicate {r} (seed {config.base_seed + r}): {exc}", reports) from exc
    return ReplicationStats.from_reports(reports), reports


# --------------------------------------------------------------------------
# CSV helpers


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else v


def to_csv(columns: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(path: str | Path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    Path(path).write_text(to_csv(columns, rows), encoding="utf-8")


def _minutes(seconds: float, include_timing: bool):
    return round(seconds / 60.0, 4) if include_timing else None


def replicate_rows(reports: Sequence[SolveReport], stats: ReplicationStats,
                   include_timing: bool = True) -> list[dict]:
    rows = [{"row": k, "seed": r.seed, "solver": r.solver, "z": r.z, "z1": r.z1, "z2": r.z2,
             "k_active": r.k_active, "wall_time_min": _minutes(r.wall_time, include_timing)}
            for k, r in enumerate(reports)]
    rows.append({"row": "summary", "solver": reports[0].solver if reports else None, "min": stats.min,
                 "max": stats.max, "mean": stats.mean, "std": stats.std,
                 "wall_time_min": _minutes(stats.mean_wall_time, include_timing)})
    return rows


def write_replications(out_dir: str | Path, config: ExperimentConfig, stats: ReplicationStats,
                       reports: Sequence[SolveReport], include_timing: bool = True) -> None:
    """``config.json``, ``replicates.csv``, and per run ``run_<r>.json`` + ``trace_<r>.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    write_csv(out / "replicates.csv", REPLICATE_COLUMNS, replicate_rows(reports, stats, include_timing))
    for k, r in enumerate(reports):
        (out / f"run_{k}.json").write_text(r.to_json(include_timing), encoding="utf-8")
        emit_trace(r, out / f"trace_{k}.csv")


# --------------------------------------------------------------------------
# experiments


def run_sweep(task_counts: Sequence[int], replications: int = 10, base_seed: int = 0,
              ga: GAParams | None = None, cases=None) -> list[dict]:
    """Every L16 case on every task count; one row of z statistics per pair."""
    rows = []
    for case, (p_s, p_e, M) in enumerate(cases or taguchi_l16()):
        for L in task_counts:
            cfg = ExperimentConfig("hmao", tasks=L, ga=ga or GAParams(), mao=MAOParams(M, p_s, p_e),
                                   replications=replications, base_seed=base_seed)
            stats, _ = run_replications(cfg)
            rows.append({"case": case, "p_s": p_s, "p_e": p_e, "M": M, "L": L, "min": stats.min,
                         "max": stats.max, "mean": stats.mean, "std": stats.std})
    return rows


def main_effects(rows: Sequence[dict]) -> list[dict]:
    """Mean z per factor level (averaged over the cases at that level), per L."""
    out = []
    for L in sorted({r["L"] for r in rows}):
        sub = [r for r in rows if r["L"] == L]
        for factor in ("p_s", "p_e", "M"):
            for level in sorted({r[factor] for r in sub}):
                vals = [r["mean"] for r in sub if r[factor] == level]
                out.append({"L": L, "factor": factor, "level": level, "mean_z": math.fsum(vals) / len(vals)})
    return out


def run_compare(task_counts: Sequence[int], replications: int = 10, base_seed: int = 0,
                ga: GAParams | None = None, mao: MAOParams | None = None,
                baseline: BaselineParams | None = None, solvers: Sequence[str] = ("hmao", "ga", "nsga2"),
                include_timing: bool = True) -> list[dict]:
    """Per task count ``L`` (on ``L`` nodes), replication statistics of every solver."""
    rows = []
    for L in task_counts:
        s = make_scenario(L, L)
        for solver in solvers:
            cfg = ExperimentConfig(solver, tasks=L, ga=ga or GAParams(), mao=mao or MAOParams(1000),
                                   baseline=baseline or BaselineParams(), replications=replications,
                                   base_seed=base_seed)
            stats, reports = run_replications(cfg, s)
            rows.append({"L": L, "solver": solver, "min": stats.min, "max": stats.max, "mean": stats.mean,
                         "std": stats.std, "mean_z1": math.fsum(r.z1 for r in reports) / len(reports),
                         "mean_z2": math.fsum(r.z2 for r in reports) / len(reports),
                         "time_min": _minutes(stats.mean_wall_time, include_timing)})
    return rows


def run_online_experiment(events: Sequence[SlotEvent], K: int = 100, ga: GAParams | None = None,
                          mao: MAOParams | None = None, seed: int = 0,
                          node=STANDARD_NODE) -> list[dict]:
    """Paired per-slot objectives of the two-stage method and first-fit greedy
    on the same event stream, both starting from an empty cluster."""
    hmao = replay(events, K, ga or GAParams(), mao or MAOParams(1000), np.random.default_rng(seed), "hmao", node)
    greedy = replay(events, K, None, None, None, "greedy", node)
    rows = []
    for h, g in zip(hmao, greedy):
        for r in (h, g):
            rows.append({"slot": r.params["slot"], "solver": r.solver, "z": r.z, "z1": r.z1, "z2": r.z2,
                         "k_active": r.k_active, "live_tasks": r.params["live_tasks"]})
    return rows
