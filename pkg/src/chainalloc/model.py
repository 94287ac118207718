"""Problem instance, decision variable and objective functions.

Sub-tasks are addressed two ways: by :class:`SubTaskId` ``(task, sub)`` at the
API surface, and by a flat integer index (task-major order) internally.  A
:class:`Scenario` owns the mapping between the two together with the dense
arrays every solver evaluates against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

# Absolute slack used in every capacity comparison (memory demands such as
# 9.6 GB accumulate binary rounding error).
CAPACITY_TOL = 1e-9

RESOURCES = ("cpu", "mem", "gpu", "bw")


class InstanceError(ValueError):
    """Raised for malformed or unsolvable problem instances."""


class ObjectiveError(ValueError):
    """Raised when an objective is undefined (no node in use)."""


class ResourceVector(NamedTuple):
    """CPU (MHz), memory (GB), GPU (units) and bandwidth (Mbps)."""

    cpu: float
    mem: float
    gpu: float
    bw: float

    def __add__(self, other):  # type: ignore[override]
        return ResourceVector(*(a + b for a, b in zip(self, other)))

    def __sub__(self, other):
        return ResourceVector(*(a - b for a, b in zip(self, other)))

    def fits(self, capacity: "ResourceVector", tol: float = CAPACITY_TOL) -> bool:
        return all(a <= b + tol for a, b in zip(self, capacity))

    @classmethod
    def zero(cls) -> "ResourceVector":
        return cls(0.0, 0.0, 0.0, 0.0)


class SubTaskId(NamedTuple):
    task: int
    sub: int

    def __str__(self) -> str:
        return f"t{self.task},{self.sub}"


@dataclass(frozen=True)
class TaskSpec:
    """One requested task: an ordered list of sub-task demands plus precedence.

    ``predecessors[n]`` holds the in-task indices of the sub-tasks that must
    finish before sub-task ``n``.  When omitted the task is a chain.
    """

    demands: tuple[ResourceVector, ...]
    predecessors: tuple[tuple[int, ...], ...] | None = None
    name: str = "task"
    subtask_names: tuple[str, ...] | None = None

    def __post_init__(self):
        demands = tuple(ResourceVector(*map(float, d)) for d in self.demands)
        if not demands:
            raise InstanceError(f"task {self.name!r} has no sub-tasks")
        object.__setattr__(self, "demands", demands)
        n = len(demands)
        if self.predecessors is None:
            preds = tuple(() if k == 0 else (k - 1,) for k in range(n))
        else:
            preds = tuple(tuple(sorted(set(int(p) for p in ps))) for ps in self.predecessors)
        if len(preds) != n:
            raise InstanceError(f"task {self.name!r}: predecessor list length {len(preds)} != {n}")
        for k, ps in enumerate(preds):
            for p in ps:
                if not 0 <= p < n or p == k:
                    raise InstanceError(f"task {self.name!r}: bad predecessor {p} of sub-task {k}")
        object.__setattr__(self, "predecessors", preds)
        if self.subtask_names is not None:
            if len(self.subtask_names) != n:
                raise InstanceError(f"task {self.name!r}: {len(self.subtask_names)} names for {n} sub-tasks")
            object.__setattr__(self, "subtask_names", tuple(self.subtask_names))
        if topological_order(preds) is None:
            raise InstanceError(f"task {self.name!r}: precedence graph has a cycle")

    def __len__(self) -> int:
        return len(self.demands)

    @property
    def successors(self) -> tuple[tuple[int, ...], ...]:
        succ: list[list[int]] = [[] for _ in self.demands]
        for k, ps in enumerate(self.predecessors):
            for p in ps:
                succ[p].append(k)
        return tuple(tuple(s) for s in succ)

    @property
    def is_chain(self) -> bool:
        return all(ps == ((k - 1,) if k else ()) for k, ps in enumerate(self.predecessors))

    def total_demand(self) -> ResourceVector:
        total = ResourceVector.zero()
        for d in self.demands:
            total = total + d
        return total


def topological_order(preds: Sequence[Sequence[int]]) -> list[int] | None:
    """Kahn's algorithm, smallest index first; ``None`` on a cycle."""
    n = len(preds)
    indeg = [len(p) for p in preds]
    succ: list[list[int]] = [[] for _ in range(n)]
    for k, ps in enumerate(preds):
        for p in ps:
            succ[p].append(k)
    ready = sorted(k for k in range(n) if indeg[k] == 0)
    order = []
    while ready:
        k = ready.pop(0)
        order.append(k)
        for s in succ[k]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
                ready.sort()
    return order if len(order) == n else None


@dataclass(frozen=True)
class ObjectiveWeights:
    alpha_c: float = 1 / 3
    alpha_m: float = 1 / 3
    alpha_g: float = 1 / 3
    beta_1: float = 0.5
    beta_2: float = 0.5

    def __post_init__(self):
        for name in ("alpha_c", "alpha_m", "alpha_g", "beta_1", "beta_2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InstanceError(f"weight {name}={v} outside [0, 1]")
        if abs(self.alpha_c + self.alpha_m + self.alpha_g - 1.0) > 4 * np.finfo(float).eps:
            raise InstanceError("alpha weights must sum to 1")
        if abs(self.beta_1 + self.beta_2 - 1.0) > 4 * np.finfo(float).eps:
            raise InstanceError("beta weights must sum to 1")

    @property
    def alpha(self) -> np.ndarray:
        return np.array([self.alpha_c, self.alpha_m, self.alpha_g])


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable problem instance.

    Besides the declared fields, construction derives flat arrays used by the
    solvers: ``demand`` (S, 4), ``capacity`` (K, 4), CSR predecessor and
    successor lists, and the per-node compute ``footprint`` (S, K) of every
    sub-task, i.e. its weighted CPU/memory/GPU utilization share.
    """

    nodes: tuple[ResourceVector, ...]
    tasks: tuple[TaskSpec, ...]
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)

    def __post_init__(self):
        nodes = tuple(ResourceVector(*map(float, n)) for n in self.nodes)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not nodes:
            raise InstanceError("scenario needs at least one node")
        for i, cap in enumerate(nodes):
            if min(cap) < 0:
                raise InstanceError(f"node {i} has a negative capacity")

        ids: list[SubTaskId] = []
        starts: list[int] = []
        for l, task in enumerate(self.tasks):
            starts.append(len(ids))
            ids.extend(SubTaskId(l, n) for n in range(len(task)))
        S = len(ids)
        demand = np.array([d for task in self.tasks for d in task.demands], dtype=float).reshape(S, 4)
        if (demand < 0).any():
            raise InstanceError("negative sub-task demand")
        capacity = np.array(nodes, dtype=float).reshape(len(nodes), 4)

        preds: list[tuple[int, ...]] = []
        for l, task in enumerate(self.tasks):
            base = starts[l]
            preds.extend(tuple(base + p for p in ps) for ps in task.predecessors)
        succs: list[list[int]] = [[] for _ in range(S)]
        for c, ps in enumerate(preds):
            for p in ps:
                succs[p].append(c)

        fits_any = (demand[:, None, :] <= capacity[None, :, :] + CAPACITY_TOL).all(axis=2).any(axis=1)
        if S and not fits_any.all():
            bad = ids[int(np.flatnonzero(~fits_any)[0])]
            raise InstanceError(f"sub-task {bad} does not fit on any node")

        with np.errstate(divide="ignore", invalid="ignore"):
            share = np.where(capacity[None, :, :3] > 0, demand[:, None, :3] / capacity[None, :, :3], 0.0)
        footprint = share @ self.weights.alpha

        def csr(lists):
            ptr = np.zeros(len(lists) + 1, dtype=np.int64)
            ptr[1:] = np.cumsum([len(x) for x in lists])
            idx = np.array([v for x in lists for v in x], dtype=np.int64)
            return ptr, idx

        pred_ptr, pred_idx = csr(preds)
        succ_ptr, succ_idx = csr(succs)
        edge_dst = np.repeat(np.arange(S, dtype=np.int64), np.diff(pred_ptr))

        derived = dict(
            ids=tuple(ids),
            task_start=tuple(starts),
            index={t: k for k, t in enumerate(ids)},
            task_of=np.array([t.task for t in ids], dtype=np.int64),
            demand=demand,
            capacity=capacity,
            preds=tuple(preds),
            succs=tuple(tuple(s) for s in succs),
            pred_ptr=pred_ptr,
            pred_idx=pred_idx,
            succ_ptr=succ_ptr,
            succ_idx=succ_idx,
            edge_src=pred_idx,
            edge_dst=edge_dst,
            is_head=np.diff(pred_ptr) == 0,
            footprint=footprint,
        )
        for name, value in derived.items():
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def K(self) -> int:
        return len(self.nodes)

    @property
    def L(self) -> int:
        return len(self.tasks)

    @property
    def n_subtasks(self) -> int:
        return len(self.ids)

    def flat(self, t: SubTaskId | int) -> int:
        if isinstance(t, (int, np.integer)):
            if not 0 <= t < self.n_subtasks:
                raise InstanceError(f"unknown sub-task index {t}")
            return int(t)
        try:
            return self.index[SubTaskId(*t)]
        except (KeyError, TypeError):
            raise InstanceError(f"unknown sub-task {t}") from None

    def neighbors(self, k: int) -> tuple[int, ...]:
        return self.preds[k] + self.succs[k]


class Placement:
    """Total map sub-task -> node index, stored as a flat int array.

    ``-1`` marks an unassigned sub-task; such placements are reported by
    :func:`check_feasible` and rejected by the objective functions.
    """

    __slots__ = ("scenario", "assign")

    def __init__(self, scenario: Scenario, assign: Iterable[int]):
        arr = np.array(list(assign) if not isinstance(assign, np.ndarray) else assign, dtype=np.int64)
        if arr.shape != (scenario.n_subtasks,):
            raise InstanceError(f"placement has {arr.size} entries, scenario has {scenario.n_subtasks} sub-tasks")
        self.scenario = scenario
        self.assign = arr

    @classmethod
    def from_mapping(cls, scenario: Scenario, mapping: Mapping[SubTaskId, int]) -> "Placement":
        assign = np.full(scenario.n_subtasks, -1, dtype=np.int64)
        for t, node in mapping.items():
            assign[scenario.flat(t)] = node
        return cls(scenario, assign)

    @classmethod
    def from_groups(cls, scenario: Scenario, groups: Mapping[int, Iterable[SubTaskId]]) -> "Placement":
        return cls.from_mapping(scenario, {t: node for node, ts in groups.items() for t in ts})

    def __getitem__(self, t: SubTaskId | int) -> int:
        return int(self.assign[self.scenario.flat(t)])

    def __eq__(self, other) -> bool:
        return isinstance(other, Placement) and np.array_equal(self.assign, other.assign)

    def __repr__(self) -> str:
        return f"Placement({self.groups()})"

    def copy(self) -> "Placement":
        return Placement(self.scenario, self.assign.copy())

    def used_nodes(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unique(self.assign[self.assign >= 0]))

    @property
    def k_active(self) -> int:
        return len(self.used_nodes())

    def groups(self) -> dict[int, list[SubTaskId]]:
        out: dict[int, list[SubTaskId]] = {}
        for k, node in enumerate(self.assign):
            out.setdefault(int(node), []).append(self.scenario.ids[k])
        return dict(sorted(out.items()))

    def as_mapping(self) -> dict[SubTaskId, int]:
        return {t: int(i) for t, i in zip(self.scenario.ids, self.assign)}


# --------------------------------------------------------------------------
# vectorised evaluation


def subtask_costs(assign: np.ndarray, s: Scenario) -> np.ndarray:
    """Bandwidth cost of every sub-task: ingress for heads, else charged if any
    predecessor sits on another node.  Unassigned predecessors count as remote."""
    remote = np.zeros(s.n_subtasks, dtype=bool)
    if s.edge_src.size:
        cross = (assign[s.edge_src] != assign[s.edge_dst]) | (assign[s.edge_src] < 0)
        np.logical_or.at(remote, s.edge_dst, cross)
    charged = s.is_head | remote
    return np.where(charged, s.demand[:, 3], 0.0)


def usage_matrix(assign: np.ndarray, s: Scenario, costs: np.ndarray | None = None) -> np.ndarray:
    """(K, 4) per-node usage; the bandwidth column sums charged costs."""
    if costs is None:
        costs = subtask_costs(assign, s)
    usage = np.zeros((s.K, 4))
    placed = assign >= 0
    idx = assign[placed]
    for r in range(3):
        usage[:, r] = np.bincount(idx, weights=s.demand[placed, r], minlength=s.K)
    usage[:, 3] = np.bincount(idx, weights=costs[placed], minlength=s.K)
    return usage


def objectives_from_usage(usage: np.ndarray, active: np.ndarray, s: Scenario) -> tuple[float, float, float]:
    """(z1, z2, z) given a usage matrix and the boolean mask of used nodes."""
    k_a = int(active.sum())
    if k_a == 0:
        raise ObjectiveError("no node hosts a sub-task; objective undefined")
    cap = s.capacity[active]
    u = usage[active]
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(cap[:, :3] > 0, u[:, :3] / cap[:, :3], 0.0)
        bw = np.where(cap[:, 3] > 0, u[:, 3] / cap[:, 3], 0.0)
    w = s.weights
    z1 = float((phi @ w.alpha).sum() / k_a)
    z2 = float(bw.sum() / k_a)
    return z1, z2, w.beta_1 * z1 + w.beta_2 * (1.0 - z2)


def _require_total(p: Placement) -> None:
    if (p.assign < 0).any():
        raise ObjectiveError("placement is not total")


# --------------------------------------------------------------------------
# public operations


def bandwidth_cost(p: Placement, s: Scenario, t: SubTaskId | int) -> float:
    k = s.flat(t)
    if not s.preds[k]:
        return float(s.demand[k, 3])
    here = p.assign[k]
    if any(p.assign[q] != here or p.assign[q] < 0 for q in s.preds[k]):
        return float(s.demand[k, 3])
    return 0.0


def node_usage(p: Placement, s: Scenario, i: int) -> ResourceVector:
    if not 0 <= i < s.K:
        raise InstanceError(f"node {i} out of range")
    return ResourceVector(*map(float, usage_matrix(p.assign, s)[i]))


class Violation(NamedTuple):
    node: int  # -1 for assignment violations
    resource: str  # one of RESOURCES, or "assignment"
    amount: float  # usage, or the offending flat sub-task index
    limit: float


def check_feasible(p: Placement, s: Scenario) -> list[Violation]:
    """Every capacity overrun and assignment defect; an empty list means feasible."""
    out: list[Violation] = []
    for k in np.flatnonzero((p.assign < 0) | (p.assign >= s.K)):
        out.append(Violation(-1, "assignment", float(k), float(s.K)))
    if out:
        return out
    usage = usage_matrix(p.assign, s)
    over = usage > s.capacity + CAPACITY_TOL
    for i, r in zip(*np.nonzero(over)):
        out.append(Violation(int(i), RESOURCES[r], float(usage[i, r]), float(s.capacity[i, r])))
    return out


def is_feasible(p: Placement, s: Scenario) -> bool:
    return not check_feasible(p, s)


def evaluate(p: Placement, s: Scenario) -> tuple[float, float, float]:
    """(z1, z2, z) of a total placement."""
    _require_total(p)
    usage = usage_matrix(p.assign, s)
    active = np.bincount(p.assign, minlength=s.K) > 0
    return objectives_from_usage(usage, active, s)


def z1(p: Placement, s: Scenario) -> float:
    return evaluate(p, s)[0]


def z2(p: Placement, s: Scenario) -> float:
    return evaluate(p, s)[1]


def z(p: Placement, s: Scenario) -> float:
    return evaluate(p, s)[2]


def mean_footprint(s: Scenario) -> float:
    """Average weighted compute utilization of one sub-task, over the distinct
    sub-task types of the instance (types are identified by demand vector).

    Utilization shares are taken against the first node; all shipped
    scenarios use homogeneous fleets.
    """
    if not s.n_subtasks:
        return 0.0
    types: dict[tuple[float, ...], float] = {}
    for k in range(s.n_subtasks):
        types.setdefault(tuple(s.demand[k]), float(s.footprint[k, 0]))
    return math.fsum(types.values()) / len(types)
