"""Time-slotted allocation: tasks arrive and depart, the cluster persists.

Each slot first releases the departing tasks, then places the arrivals with
the two-stage method against what is left.  Only the arriving sub-tasks may
move; resident tasks stay where they are.

Event streams are stored as JSON Lines: a header record
``{"format": "chainalloc-stream/1"}`` followed by one record per slot::

    {"slot": 3, "arrivals": [{"id": 17, "profile": "standard"}], "departures": [4, 9]}

Arrival ids are unique over the stream; profiles name entries of a profile
library (the built-in ``standard`` profile unless a library file is given).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .ga import DecodeError, GAParams, evolve
from .model import (InstanceError, ObjectiveWeights, Placement, ResourceVector, Scenario, TaskSpec,
                    check_feasible, objectives_from_usage, subtask_costs, topological_order, usage_matrix)
from .mao import MAOParams, run_mao
from .report import SolveReport
from .scenario import STANDARD_NODE, ScenarioFormatError, TaskProfile, builtin_profiles

STREAM_FORMAT = "chainalloc-stream/1"


class SlotInfeasibleError(InstanceError):
    """The arrivals of a slot cannot be placed on the remaining capacity."""


class Arrival(NamedTuple):
    task_id: int
    profile: str
    spec: TaskSpec


@dataclass(frozen=True)
class SlotEvent:
    slot: int
    arrivals: tuple[Arrival, ...] = ()
    departures: tuple[int, ...] = ()


@dataclass(frozen=True)
class ClusterState:
    """Live tasks (in arrival order) with the node of every sub-task."""

    nodes: tuple[ResourceVector, ...]
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    tasks: tuple[tuple[int, TaskSpec], ...] = ()
    assign: tuple[tuple[int, ...], ...] = ()
    slot: int = -1

    @classmethod
    def empty(cls, K: int, node: ResourceVector = STANDARD_NODE,
              weights: ObjectiveWeights | None = None) -> "ClusterState":
        return cls(nodes=(node,) * K, weights=weights or ObjectiveWeights())

    @property
    def task_ids(self) -> tuple[int, ...]:
        return tuple(tid for tid, _ in self.tasks)

    @cached_property
    def scenario(self) -> Scenario:
        return Scenario(self.nodes, tuple(spec for _, spec in self.tasks), self.weights)

    @cached_property
    def flat_assign(self) -> np.ndarray:
        return np.array([i for nodes in self.assign for i in nodes], dtype=np.int64)

    def placement(self) -> Placement:
        return Placement(self.scenario, self.flat_assign)

    def usage(self) -> np.ndarray:
        return usage_matrix(self.flat_assign, self.scenario)

    def residual(self) -> np.ndarray:
        return self.scenario.capacity - self.usage()

    def used_nodes(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unique(self.flat_assign))

    def objectives(self) -> tuple[float, float, float]:
        """(z1, z2, z) over all used nodes; NaNs for an empty cluster."""
        if not self.tasks:
            return float("nan"), float("nan"), float("nan")
        active = np.bincount(self.flat_assign, minlength=len(self.nodes)) > 0
        return objectives_from_usage(self.usage(), active, self.scenario)


def release(state: ClusterState, departures: Sequence[int]) -> ClusterState:
    """Drop the departing tasks; costs of the survivors follow from the rest."""
    gone = set(int(d) for d in departures)
    unknown = gone - set(state.task_ids)
    if unknown:
        raise InstanceError(f"cannot release unknown task ids {sorted(unknown)}")
    if not gone:
        return state
    keep = [k for k, (tid, _) in enumerate(state.tasks) if tid not in gone]
    return replace(state, tasks=tuple(state.tasks[k] for k in keep),
                   assign=tuple(state.assign[k] for k in keep))


def dependency_order(tasks: Sequence[TaskSpec], offset: int = 0) -> np.ndarray:
    """Flat genes listing each task's sub-tasks in topological order, task after task."""
    genes = []
    base = offset
    for spec in tasks:
        genes.extend(base + k for k in topological_order(spec.predecessors))
        base += len(spec)
    return np.array(genes, dtype=np.int64)


def seeded_population(arrivals: Sequence[TaskSpec], P: int, rng, offset: int = 0) -> list[np.ndarray]:
    """Individual 0 follows the dependency order; the other ``P - 1`` are random."""
    if P < 1:
        raise ValueError("population size must be >= 1")
    first = dependency_order(arrivals, offset)
    return [first] + [offset + rng.permutation(first.size).astype(np.int64) for _ in range(P - 1)]


def node_order(s: Scenario, assign0: np.ndarray) -> np.ndarray:
    """Used nodes by ascending weighted utilization (ties by index), then unused nodes."""
    placed = assign0 >= 0
    eta = np.bincount(assign0[placed], weights=s.footprint[np.flatnonzero(placed), assign0[placed]],
                      minlength=s.K) if placed.any() else np.zeros(s.K)
    used = np.bincount(assign0[placed], minlength=s.K) > 0
    used_idx = np.flatnonzero(used)
    used_idx = used_idx[np.argsort(eta[used_idx], kind="stable")]
    return np.concatenate([used_idx, np.flatnonzero(~used)]).astype(np.int64)


class _Slot:
    """First-fit machinery for one slot, with the node order frozen."""

    def __init__(self, s: Scenario, assign0: np.ndarray):
        self.s = s
        self.assign0 = assign0
        self.order = node_order(s, assign0)
        self.cost0 = subtask_costs(assign0, s)
        self.usage0 = usage_matrix(assign0, s, self.cost0)
        self.count0 = np.bincount(assign0[assign0 >= 0], minlength=s.K).astype(np.int64)

    def fit(self, genes: np.ndarray):
        s = self.s
        return _kernels.first_fit(genes, self.order, s.demand, s.capacity, self.assign0, self.usage0,
                                  self.count0, self.cost0, s.pred_ptr, s.pred_idx, s.succ_ptr, s.succ_idx)

    def score(self, genes: np.ndarray) -> float | None:
        _, usage, count, ok = self.fit(genes)
        if not ok:
            return None
        return objectives_from_usage(usage, count > 0, self.s)[0]

    def decode(self, genes: np.ndarray) -> np.ndarray:
        assign, _, _, ok = self.fit(genes)
        if not ok:
            raise SlotInfeasibleError("arrivals do not fit on the remaining capacity")
        return assign


def _admit(state: ClusterState, arrivals: Sequence[Arrival]):
    clash = {a.task_id for a in arrivals} & set(state.task_ids)
    if clash or len({a.task_id for a in arrivals}) != len(arrivals):
        raise InstanceError(f"duplicate task ids among arrivals {sorted(a.task_id for a in arrivals)}")
    tasks = state.tasks + tuple((a.task_id, a.spec) for a in arrivals)
    s = Scenario(state.nodes, tuple(spec for _, spec in tasks), state.weights)
    n_old = int(state.flat_assign.size)
    assign0 = np.concatenate([state.flat_assign, np.full(s.n_subtasks - n_old, -1, dtype=np.int64)])
    return tasks, s, assign0, n_old


def _settle(state: ClusterState, tasks, s: Scenario, assign: np.ndarray, slot: int) -> ClusterState:
    per_task = tuple(tuple(int(i) for i in assign[start:start + len(spec)])
                     for start, (_, spec) in zip(s.task_start, tasks))
    new = replace(state, tasks=tasks, assign=per_task, slot=slot)
    violations = check_feasible(new.placement(), new.scenario)
    if violations:
        raise SlotInfeasibleError(f"slot {slot} placement overruns capacity: {violations[:3]}")
    return new


def _slot_report(solver: str, state: ClusterState, started: float, params: dict, trace=None) -> SolveReport:
    z1, z2, z = state.objectives()
    return SolveReport(
        solver=solver,
        placement=state.placement() if state.tasks else None,
        z=z, z1=z1, z2=z2,
        trace=trace or [],
        wall_time=time.perf_counter() - started,
        params={"slot": state.slot, "live_tasks": len(state.tasks), **params},
    )


def _check_slot(state: ClusterState, event: SlotEvent) -> None:
    if event.slot <= state.slot:
        raise InstanceError(f"slot {event.slot} does not follow slot {state.slot}")


def step(state: ClusterState, event: SlotEvent, ga_params: GAParams, mao_params: MAOParams,
         rng) -> tuple[ClusterState, SolveReport]:
    """Release, place the arrivals with GA + MAO, and report cluster-wide objectives."""
    started = time.perf_counter()
    _check_slot(state, event)
    state = release(state, event.departures)
    if not event.arrivals:
        state = replace(state, slot=event.slot)
        return state, _slot_report("hmao", state, started, {})

    tasks, s, assign0, n_old = _admit(state, event.arrivals)
    slot = _Slot(s, assign0)
    n_new = s.n_subtasks - n_old
    initial = seeded_population([a.spec for a in event.arrivals], ga_params.population_size, rng, n_old)
    try:
        result = evolve(initial, slot.score, ga_params, rng,
                        lambda: n_old + rng.permutation(n_new).astype(np.int64))
    except DecodeError as exc:
        raise SlotInfeasibleError(f"slot {event.slot}: {exc}") from None
    assign = slot.decode(result.best)

    movable = np.zeros(s.n_subtasks, dtype=bool)
    movable[n_old:] = True
    agents = sorted(set(int(i) for i in assign[n_old:]))
    used = sorted(set(int(i) for i in assign))
    mao = run_mao(Placement(s, assign), s, mao_params, rng, agents=agents, movable=movable,
                  objective_nodes=used)
    state = _settle(state, tasks, s, mao.placement.assign, event.slot)
    report = _slot_report("hmao", state, started, {"agents": agents}, mao.trace)
    report.ga_history = list(result.history)
    return state, report


def greedy_step(state: ClusterState, event: SlotEvent) -> tuple[ClusterState, SolveReport]:
    """Release, then first-fit the arrivals in dependency order."""
    started = time.perf_counter()
    _check_slot(state, event)
    state = release(state, event.departures)
    if not event.arrivals:
        state = replace(state, slot=event.slot)
        return state, _slot_report("greedy", state, started, {})
    tasks, s, assign0, n_old = _admit(state, event.arrivals)
    assign = _Slot(s, assign0).decode(dependency_order([a.spec for a in event.arrivals], n_old))
    state = _settle(state, tasks, s, assign, event.slot)
    return state, _slot_report("greedy", state, started, {})


def decode_online(ind, state: ClusterState, arrivals: Sequence[TaskSpec]) -> np.ndarray:
    """Nodes chosen for the arrivals' sub-tasks (in flat order) when ``ind``
    (a permutation of ``0..n-1`` over the arrivals' sub-tasks) is first-fitted
    against the current cluster."""
    first = max(state.task_ids, default=-1) + 1
    fresh = tuple(Arrival(first + k, "", spec) for k, spec in enumerate(arrivals))
    _, s, assign0, n_old = _admit(state, fresh)
    genes = n_old + np.asarray(ind, dtype=np.int64)
    return _Slot(s, assign0).decode(genes)[n_old:]


# --------------------------------------------------------------------------
# streams


def generate_stream(n_slots: int, rng, level: int = 0, profile: str = "standard",
                    profiles: dict[str, TaskProfile] | None = None) -> list[SlotEvent]:
    """Arrival and departure counts drawn uniformly from ``{4i+1, ..., 4i+9}``;
    departures are capped by the live count and pick live tasks uniformly."""
    if n_slots < 0 or level < 0:
        raise ValueError("n_slots and level must be >= 0")
    lib = profiles or builtin_profiles()
    if profile not in lib:
        raise InstanceError(f"unknown profile {profile!r}")
    spec = lib[profile].task()
    lo, hi = 4 * level + 1, 4 * level + 9
    live: list[int] = []
    next_id = 0
    events = []
    for t in range(n_slots):
        n_dep = min(int(rng.integers(lo, hi + 1)), len(live))
        gone = sorted(int(x) for x in rng.choice(np.array(live, dtype=np.int64), size=n_dep, replace=False)) \
            if n_dep else []
        n_arr = int(rng.integers(lo, hi + 1))
        arrivals = tuple(Arrival(next_id + k, profile, spec) for k in range(n_arr))
        next_id += n_arr
        gone_set = set(gone)
        live = [x for x in live if x not in gone_set] + [a.task_id for a in arrivals]
        events.append(SlotEvent(t, arrivals, tuple(gone)))
    return events


def dumps_stream(events: Sequence[SlotEvent]) -> str:
    lines = [json.dumps({"format": STREAM_FORMAT})]
    for ev in events:
        lines.append(json.dumps({
            "slot": ev.slot,
            "arrivals": [{"id": a.task_id, "profile": a.profile} for a in ev.arrivals],
            "departures": list(ev.departures),
        }))
    return "\n".join(lines) + "\n"


def save_stream(events: Sequence[SlotEvent], path: str | Path) -> None:
    Path(path).write_text(dumps_stream(events), encoding="utf-8")


def loads_stream(text: str, source: str = "<stream>",
                 profiles: dict[str, TaskProfile] | None = None) -> list[SlotEvent]:
    lib = builtin_profiles()
    lib.update(profiles or {})
    specs = {name: prof.task() for name, prof in lib.items()}

    def fail(line: int, msg: str):
        raise ScenarioFormatError(f"{source}:{line}: {msg}")

    records = []
    for n, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        try:
            records.append((n, json.loads(raw)))
        except json.JSONDecodeError as exc:
            fail(n, exc.msg)
    if not records or records[0][1] != {"format": STREAM_FORMAT}:
        fail(records[0][0] if records else 1, f"expected header {{'format': {STREAM_FORMAT!r}}}")

    events: list[SlotEvent] = []
    live: set[int] = set()
    seen: set[int] = set()
    last = -1
    for n, rec in records[1:]:
        if not isinstance(rec, dict):
            fail(n, "expected an object")
        slot = rec.get("slot")
        if not isinstance(slot, int) or isinstance(slot, bool) or slot <= last:
            fail(n, f"slot must be an integer above {last}, got {slot!r}")
        deps = rec.get("departures", [])
        if not isinstance(deps, list) or not all(isinstance(d, int) and not isinstance(d, bool) for d in deps):
            fail(n, "departures must be a list of task ids")
        missing = sorted(set(deps) - live)
        if missing or len(set(deps)) != len(deps):
            fail(n, f"departures reference tasks that are not live: {missing or deps}")
        arrivals = []
        arr = rec.get("arrivals", [])
        if not isinstance(arr, list):
            fail(n, "arrivals must be a list")
        for a in arr:
            if not isinstance(a, dict) or not isinstance(a.get("id"), int) or isinstance(a.get("id"), bool):
                fail(n, f"bad arrival record {a!r}")
            tid, prof = a["id"], a.get("profile", "standard")
            if tid in seen:
                fail(n, f"task id {tid} reused")
            if prof not in specs:
                fail(n, f"unknown profile {prof!r}")
            seen.add(tid)
            arrivals.append(Arrival(tid, prof, specs[prof]))
        live -= set(deps)
        live |= {a.task_id for a in arrivals}
        events.append(SlotEvent(slot, tuple(arrivals), tuple(deps)))
        last = slot
    return events


def load_stream(path: str | Path, profiles: dict[str, TaskProfile] | None = None) -> list[SlotEvent]:
    path = Path(path)
    return loads_stream(path.read_text(encoding="utf-8"), str(path), profiles)


def replay(events: Sequence[SlotEvent], K: int, ga_params: GAParams | None, mao_params: MAOParams | None,
           rng, solver: str = "hmao", node: ResourceVector = STANDARD_NODE,
           weights: ObjectiveWeights | None = None) -> list[SolveReport]:
    """Run a whole stream from an empty cluster; one report per slot."""
    if solver not in ("hmao", "greedy"):
        raise ValueError(f"unknown online solver {solver!r}")
    state = ClusterState.empty(K, node, weights)
    reports = []
    for ev in events:
        if solver == "hmao":
            state, rep = step(state, ev, ga_params or GAParams(), mao_params or MAOParams(), rng)
        else:
            state, rep = greedy_step(state, ev)
        reports.append(rep)
    return reports
