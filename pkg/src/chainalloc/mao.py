"""Stage 2: multi-agent local search over a fixed set of active nodes.

Every active node is an agent owning the sub-tasks placed on it.  Each
iteration sweeps agents by ascending id and their sub-tasks by flat index;
for every neighbour of the active sub-task that lives on another agent, the
host picks a target (the neighbour, or a random foreign sub-task with
probability ``selection_prob``), ranks its own sub-tasks as swap candidates,
and tries to pull the target in by migration or by a swap.

Moves are scored by the change in bandwidth utilization summed over the
agents they touch (which equals ``K_a`` times the change in z2).  A move that
does not strictly reduce it is still taken with ``exchange_prob`` per
candidate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .ga import GAParams, run_improved_ga
from .model import (CAPACITY_TOL, InstanceError, Placement, Scenario, SubTaskId, check_feasible,
                    evaluate, mean_footprint, subtask_costs, usage_matrix)
from .report import SolveReport, TraceRecorder

IMPROVE_EPS = 1e-12


@dataclass(frozen=True)
class MAOParams:
    max_iterations: int = 500
    selection_prob: float = 0.15
    exchange_prob: float = 0.15

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        for p in (self.selection_prob, self.exchange_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")


class CandidateClass(IntEnum):
    """Export priority of a host sub-task; lower value is tried first."""

    SUBTASK1 = 1  # has a neighbour on the target's agent
    SUBTASK2 = 2  # no neighbour on either agent
    SUBTASK3 = 3  # co-located with a neighbour on the host


class Candidate(NamedTuple):
    subtask: int
    cls: CandidateClass
    diff: float


class Move(NamedTuple):
    kind: str  # "migrated" | "swapped"
    delta: float
    costs: dict  # flat sub-task -> new bandwidth cost
    nodes: dict  # node -> [dcpu, dmem, dgpu, dbw]
    relocations: tuple  # (sub-task, destination) pairs


class SharedBoard:
    """Global placement plus incrementally maintained per-node usage.

    Plain Python lists are used for the scalar-heavy inner loop.
    """

    def __init__(self, s: Scenario, assign, agents, movable=None):
        self.s = s
        assign = np.asarray(assign, dtype=np.int64)
        if (assign < 0).any():
            raise InstanceError("board needs a total placement")
        self.assign = [int(a) for a in assign]
        self.agents = tuple(sorted(int(a) for a in agents))
        self.agent_set = frozenset(self.agents)
        self.demand = [tuple(map(float, row)) for row in s.demand]
        self.cap = [tuple(map(float, row)) for row in s.capacity]
        self.fp = [list(map(float, row)) for row in s.footprint]
        self.preds = s.preds
        self.succs = s.succs
        self.neigh = [s.preds[k] + s.succs[k] for k in range(s.n_subtasks)]
        self.inv_bw = [1.0 / c[3] if c[3] > 0 else 0.0 for c in self.cap]
        self.movable = None if movable is None else [bool(m) for m in movable]
        self.eta_bar = mean_footprint(s)
        self.resync()
        # sub-tasks that may be drawn as random targets
        self.pool = [k for k in range(s.n_subtasks)
                     if self.assign[k] in self.agent_set and self.is_movable(k)]

    def resync(self) -> None:
        s = self.s
        arr = np.array(self.assign, dtype=np.int64)
        self.cost = [float(c) for c in subtask_costs(arr, s)]
        self.usage = [list(map(float, row)) for row in usage_matrix(arr, s)]
        self.eta = [sum(self.fp[k][i] for k in range(s.n_subtasks) if self.assign[k] == i)
                    for i in range(s.K)]
        self.members = {i: set() for i in range(s.K)}
        for k, i in enumerate(self.assign):
            self.members[i].add(k)

    def is_movable(self, k: int) -> bool:
        return self.movable is None or self.movable[k]

    def placement(self) -> Placement:
        return Placement(self.s, np.array(self.assign, dtype=np.int64))

    def coherent(self, rel: float = 1e-9) -> bool:
        """Incremental usage equals a from-scratch recomputation."""
        arr = np.array(self.assign, dtype=np.int64)
        fresh = usage_matrix(arr, self.s)
        return (np.allclose(np.array(self.usage), fresh, rtol=rel, atol=1e-9)
                and np.allclose(self.cost, subtask_costs(arr, self.s), rtol=rel, atol=1e-9))

    # -- evaluation -------------------------------------------------------

    def _charged(self, k: int) -> float:
        ps = self.preds[k]
        if not ps:
            return self.demand[k][3]
        here = self.assign[k]
        for q in ps:
            if self.assign[q] != here:
                return self.demand[k][3]
        return 0.0

    def evaluate_move(self, kind: str, relocations) -> Move | None:
        """Score a set of relocations; None if it breaks any capacity."""
        assign = self.assign
        old_nodes = [(k, assign[k]) for k, _ in relocations]
        touched = set()
        for k, dst in relocations:
            touched.add(k)
            touched.update(self.succs[k])
        for k, dst in relocations:
            assign[k] = dst
        new_costs = {k: self._charged(k) for k in touched}
        for k, src in old_nodes:
            assign[k] = src

        nodes: dict[int, list[float]] = {}
        for (k, dst), (_, src) in zip(relocations, old_nodes):
            d = self.demand[k]
            a = nodes.setdefault(src, [0.0, 0.0, 0.0, 0.0])
            b = nodes.setdefault(dst, [0.0, 0.0, 0.0, 0.0])
            a[0] -= d[0]; a[1] -= d[1]; a[2] -= d[2]
            b[0] += d[0]; b[1] += d[1]; b[2] += d[2]
        dest = dict(relocations)
        delta = 0.0
        for k, c in new_costs.items():
            old_node = assign[k]
            new_node = dest.get(k, old_node)
            nodes.setdefault(old_node, [0.0, 0.0, 0.0, 0.0])[3] -= self.cost[k]
            nodes.setdefault(new_node, [0.0, 0.0, 0.0, 0.0])[3] += c
            delta += c * self.inv_bw[new_node] - self.cost[k] * self.inv_bw[old_node]
        for i, dv in nodes.items():
            u, cap = self.usage[i], self.cap[i]
            for r in range(4):
                if dv[r] > 0 and u[r] + dv[r] > cap[r] + CAPACITY_TOL:
                    return None
        return Move(kind, delta, new_costs, nodes, tuple(relocations))

    def apply(self, move: Move) -> None:
        for k, dst in move.relocations:
            src = self.assign[k]
            self.members[src].discard(k)
            self.members[dst].add(k)
            self.eta[src] -= self.fp[k][src]
            self.eta[dst] += self.fp[k][dst]
            self.assign[k] = dst
        for k, c in move.costs.items():
            self.cost[k] = c
        for i, dv in move.nodes.items():
            u = self.usage[i]
            for r in range(4):
                u[r] += dv[r]

    def objective(self, nodes) -> tuple[float, float, float]:
        """(z1, z2, z) over a fixed node set."""
        w = self.s.weights
        k_a = len(nodes)
        z1 = sum(self.eta[i] for i in nodes) / k_a
        z2 = sum(self.usage[i][3] * self.inv_bw[i] for i in nodes) / k_a
        return z1, z2, w.beta_1 * z1 + w.beta_2 * (1.0 - z2)


# --------------------------------------------------------------------------
# operators


def adjacent_subtasks(board: SharedBoard, t: SubTaskId | int) -> set[tuple[SubTaskId, int]]:
    """Predecessors and successors of ``t`` with the agents hosting them."""
    k = board.s.flat(t)
    return {(board.s.ids[u], board.assign[u]) for u in board.neigh[k]}


def select_target(board: SharedBoard, host: int, adj: int, p_s: float, rng) -> int | None:
    """The adjacent sub-task, or with probability ``p_s`` a uniformly random
    sub-task living on another agent.  None if no such sub-task exists."""
    if rng.random() >= p_s:
        return adj
    if len(board.agents) < 2:
        return None
    pool = board.pool
    assign = board.assign
    if all(assign[k] == host for k in pool):
        return None
    while True:
        k = pool[int(rng.integers(len(pool)))]
        if assign[k] != host:
            return k


def build_source_candidates(board: SharedBoard, host: int, active: int, target_agent: int,
                            target: int | None = None) -> list[Candidate]:
    """Rank the host's other sub-tasks for export to ``target_agent``.

    A candidate co-located with any neighbour on the host (the active
    sub-task included) is SUBTASK3; otherwise one with a neighbour on the
    target agent is SUBTASK1; the rest are SUBTASK2.  Within a class the
    candidates are ordered by how far the host's utilization after the swap
    would sit from the mean agent utilization (stable in flat-index order).
    """
    if host == target_agent:
        raise ValueError("host and target agent must differ")
    assign = board.assign
    eta_mean = sum(board.eta[i] for i in board.agents) / len(board.agents)
    gain = board.fp[target][host] if target is not None else 0.0
    base = board.eta[host] + gain
    out = []
    for c in sorted(board.members[host]):
        if c == active or not board.is_movable(c):
            continue
        on_host = on_target = False
        for u in board.neigh[c]:
            a = assign[u]
            if a == host:
                on_host = True
                break
            if a == target_agent:
                on_target = True
        if on_host:
            cls = CandidateClass.SUBTASK3
        elif on_target:
            cls = CandidateClass.SUBTASK1
        else:
            cls = CandidateClass.SUBTASK2
        out.append(Candidate(c, cls, abs(base - board.fp[c][host] - eta_mean)))
    out.sort(key=lambda c: (c.cls, c.diff))
    return out


def load_balance_ok(eta_i: float, eta_j: float, eta_bar: float) -> bool:
    """Pure migration allowed iff the receiver stays below sender + 2 * mean footprint."""
    return eta_i < eta_j + 2.0 * eta_bar


def try_exchange(board: SharedBoard, host: int, active: int, target: int,
                 candidates: list[Candidate], p_e: float, rng) -> str:
    """Pull ``target`` onto ``host`` by migration or by swapping a candidate.

    Returns ``"migrated"``, ``"swapped"`` or ``"rejected"`` (board unchanged).
    """
    src = board.assign[target]
    if src == host:
        raise ValueError("target already on host")
    eta_i = board.eta[host] + board.fp[target][host]
    eta_j = board.eta[src] - board.fp[target][src]
    balanced = load_balance_ok(eta_i, eta_j, board.eta_bar)
    migration = board.evaluate_move("migrated", ((target, host),))
    for cand in list(candidates) + [None]:  # None marks the end of the list
        move = None
        if (cand is None or balanced) and migration is not None:
            move = migration
        elif cand is not None:
            move = board.evaluate_move("swapped", ((target, host), (cand.subtask, src)))
        if move is None:
            continue
        if move.delta >= -IMPROVE_EPS and rng.random() > p_e:
            continue
        board.apply(move)
        return move.kind
    return "rejected"


# --------------------------------------------------------------------------
# drivers


def run_mao(initial: Placement, s: Scenario, params: MAOParams, rng, *, agents=None, movable=None,
            objective_nodes=None, on_move=None) -> SolveReport:
    """Iterate the agent sweep ``max_iterations`` times from a feasible start.

    ``agents`` defaults to the nodes used by ``initial``; ``movable`` (bool per
    flat sub-task) restricts which sub-tasks may change node.  The trace row
    for iteration 0 is the initial state; the best placement by z is returned.
    ``on_move(board, result)`` is called after every exchange attempt (test hook).
    """
    started = time.perf_counter()
    violations = check_feasible(initial, s)
    if violations:
        raise InstanceError(f"initial placement infeasible: {violations[:3]}")
    agents = tuple(initial.used_nodes()) if agents is None else tuple(sorted(agents))
    board = SharedBoard(s, initial.assign, agents, movable)
    if objective_nodes is None:
        objective_nodes = sorted(set(initial.used_nodes()) | set(agents))
    rec = TraceRecorder()
    rec.record(0, *board.objective(objective_nodes))
    best = list(board.assign)
    p_s, p_e = params.selection_prob, params.exchange_prob
    assign = board.assign

    for m in range(1, params.max_iterations + 1):
        for host in board.agents:
            for t in sorted(board.members[host]):
                if assign[t] != host or not board.is_movable(t):
                    continue
                for u in board.neigh[t]:
                    if assign[t] != host:
                        break
                    if assign[u] == host:
                        continue
                    target = select_target(board, host, u, p_s, rng)
                    if target is None:
                        continue
                    src = assign[target]
                    if src == host or src not in board.agent_set:
                        continue
                    cands = build_source_candidates(board, host, t, src, target)
                    result = try_exchange(board, host, t, target, cands, p_e, rng)
                    if on_move is not None:
                        on_move(board, result)
        if rec.record(m, *board.objective(objective_nodes)):
            best = list(board.assign)

    placement = Placement(s, np.array(best, dtype=np.int64))
    z1, z2, z = evaluate(placement, s)
    return SolveReport(
        solver="mao",
        placement=placement,
        z=z, z1=z1, z2=z2,
        trace=rec.rows,
        wall_time=time.perf_counter() - started,
        params={"max_iterations": params.max_iterations, "selection_prob": p_s, "exchange_prob": p_e},
    )


def run_hmao(s: Scenario, ga_params: GAParams, mao_params: MAOParams, rng, seed: int | None = None) -> SolveReport:
    """Stage 1 fixes the active node set, stage 2 reduces bandwidth on it."""
    started = time.perf_counter()
    initial, v_a, ga_result = run_improved_ga(s, ga_params, rng)
    report = run_mao(initial, s, mao_params, rng, agents=v_a)
    report.solver = "hmao"
    report.seed = seed
    report.ga_history = list(ga_result.history)
    report.params = {
        "population_size": ga_params.population_size,
        "ga_iterations": ga_params.max_iterations,
        "crossover_prob": ga_params.crossover_prob,
        "mutation_prob": ga_params.mutation_prob,
        **report.params,
    }
    report.wall_time = time.perf_counter() - started
    return report
