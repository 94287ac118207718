"""Reference optimizers: survival GA, NSGA-II and first-fit greedy.

Both evolutionary baselines search the same permutation encoding as stage 1
(first-fit decode onto nodes in index order) but score individuals on the
full objective instead of compute utilization alone.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ga import DecodeError, GAParams, decode, first_fit_assign
from .model import InstanceError, Placement, Scenario, evaluate
from .online import dependency_order, node_order
from .report import SolveReport, TraceRecorder

INFEASIBLE = -1.0  # objective sentinel; every feasible value lies in [0, 1]


@dataclass(frozen=True)
class BaselineParams:
    population_size: int = 100
    max_iterations: int = 5000
    crossover_prob: float = 1.0
    mutation_prob: float = 0.1
    max_retries: int = 1000

    def __post_init__(self):
        GAParams(self.population_size, 0, self.crossover_prob, self.mutation_prob, self.max_retries)


@dataclass(frozen=True)
class ParetoFront:
    """Non-dominated members of a population under (z1, 1 - z2)."""

    members: tuple[tuple[Placement, float, float], ...]  # (placement, z1, 1 - z2)
    rank: np.ndarray  # rank of every individual of the population it came from
    crowding: np.ndarray  # crowding distance, inf at front boundaries

    def __len__(self) -> int:
        return len(self.members)


def dominates(a, b) -> bool:
    """``a`` is at least as good everywhere and better somewhere (maximisation)."""
    return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))


class _Evaluator:
    def __init__(self, s: Scenario):
        self.s = s
        self.order = np.arange(s.K, dtype=np.int64)
        w = s.weights
        self.args = (self.order, s.demand, s.capacity, w.alpha, w.beta_1, w.beta_2,
                     s.pred_ptr, s.pred_idx, s.succ_ptr, s.succ_idx)

    def __call__(self, pop: np.ndarray):
        """(z1, z2, z, ok) of every row; infeasible rows carry ``INFEASIBLE``."""
        z1, z2, ok = _kernels.decode_batch(pop, *self.args)
        w = self.s.weights
        z = np.where(ok, w.beta_1 * z1 + w.beta_2 * (1.0 - z2), INFEASIBLE)
        return z1, z2, z, ok

    def initial(self, P: int, rng, max_retries: int) -> np.ndarray:
        S = self.s.n_subtasks
        pop = np.array([rng.permutation(S) for _ in range(P)], dtype=np.int64).reshape(P, S)
        _, _, _, ok = self(pop)
        tries = 0
        while not ok.all():
            if tries >= max_retries:
                raise DecodeError("no decodable individual found; instance too tight")
            bad = np.flatnonzero(~ok)
            pop[bad] = np.array([rng.permutation(S) for _ in bad], dtype=np.int64)
            _, _, _, ok = self(pop)
            tries += 1
        return pop


def _pairs_and_cuts(P: int, S: int, rng, p_c: float, order=None):
    order = rng.permutation(P) if order is None else order
    pairs = order.reshape(-1, 2).astype(np.int64)
    do_cross = rng.random(P // 2) <= p_c
    if S >= 4:
        a = rng.integers(1, S - 1, size=P // 2)
        b = rng.integers(1, S - 2, size=P // 2)
        b = b + (b >= a)
        cuts = np.sort(np.stack([a, b], axis=1), axis=1).astype(np.int64)
    else:
        do_cross[:] = False
        cuts = np.ones((P // 2, 2), dtype=np.int64)
    return pairs, do_cross, cuts


def _swap_mutate(pop: np.ndarray, rows: np.ndarray, rng) -> None:
    """One random two-position swap in each listed row (in place)."""
    S = pop.shape[1]
    if S < 2 or rows.size == 0:
        return
    i = rng.integers(0, S, size=rows.size)
    j = rng.integers(0, S - 1, size=rows.size)
    j = j + (j >= i)
    _kernels.apply_swaps(pop, rows.astype(np.int64), i.astype(np.int64), j.astype(np.int64))


def _report(solver, s, genes, rec, started, params, seed=None) -> SolveReport:
    placement = decode(genes, s)
    z1, z2, z = evaluate(placement, s)
    return SolveReport(solver=solver, placement=placement, z=z, z1=z1, z2=z2, trace=rec.rows, seed=seed,
                       wall_time=time.perf_counter() - started, params=params)


def _params_dict(params: BaselineParams) -> dict:
    return {"population_size": params.population_size, "max_iterations": params.max_iterations,
            "crossover_prob": params.crossover_prob, "mutation_prob": params.mutation_prob}


def run_ga_baseline(s: Scenario, params: BaselineParams, rng, seed: int | None = None) -> SolveReport:
    """Parent-versus-offspring GA on the full objective.

    Every generation pairs the population at random and recombines each pair
    with probability ``crossover_prob``.  An offspring that beats the parent
    in its slot replaces it; otherwise the offspring is swap-mutated with
    probability ``mutation_prob`` and the better of offspring and parent
    (parent on ties) takes the slot.
    """
    started = time.perf_counter()
    ev = _Evaluator(s)
    P, S = params.population_size, s.n_subtasks
    pop = ev.initial(P, rng, params.max_retries)
    z1, z2, f, _ = ev(pop)
    rec = TraceRecorder()
    b = int(np.argmax(f))
    best, best_f = pop[b].copy(), f[b]
    rec.record(0, z1[b], z2[b], f[b])

    for m in range(1, params.max_iterations + 1):
        pairs, do_cross, cuts = _pairs_and_cuts(P, S, rng, params.crossover_prob)
        kids = _kernels.crossover_pairs(pop, pairs, do_cross, cuts)
        parent = pairs.reshape(-1)
        _, _, fk, _ = ev(kids)
        losing = np.flatnonzero(fk <= f[parent])
        mutate = losing[rng.random(losing.size) <= params.mutation_prob]
        if mutate.size:
            _swap_mutate(kids, mutate, rng)
            fk[mutate] = ev(kids[mutate])[2]
        win = fk > f[parent]
        pop[parent[win]] = kids[win]
        f[parent[win]] = fk[win]
        b = int(np.argmax(f))
        if f[b] > best_f:
            best, best_f = pop[b].copy(), f[b]
        z1b, z2b, _, _ = ev(pop[b:b + 1])
        rec.record(m, z1b[0], z2b[0], f[b])

    return _report("ga", s, best, rec, started, _params_dict(params), seed)


def _tournament(rank: np.ndarray, crowd: np.ndarray, n: int, rng) -> np.ndarray:
    a, b = rng.integers(0, rank.size, size=(2, n))
    a_wins = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] >= crowd[b]))
    return np.where(a_wins, a, b)


def _position_swaps(pop: np.ndarray, p_m: float, rng) -> None:
    """Each position independently proposes a swap with a random other position."""
    P, S = pop.shape
    if S < 2:
        return
    rows, pos = np.nonzero(rng.random((P, S)) < p_m)
    partners = rng.integers(0, S - 1, size=rows.size)
    partners = partners + (partners >= pos)
    _kernels.apply_swaps(pop, rows.astype(np.int64), pos.astype(np.int64), partners.astype(np.int64))


def environmental_selection(f: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Indices of the ``n`` survivors by (rank, -crowding), plus their annotations."""
    rank = _kernels.nondominated_ranks(f)
    crowd = _kernels.crowding_distance(f, rank)
    keep = np.lexsort((-crowd, rank))[:n]
    return keep, rank[keep], crowd[keep]


def run_nsga2(s: Scenario, params: BaselineParams, rng, seed: int | None = None) -> SolveReport:
    """Generational NSGA-II over (z1, 1 - z2).

    The reported placement is the member of the final non-dominated front
    with the largest scalar z.  ``report.extras["front"]`` holds the front.
    """
    started = time.perf_counter()
    ev = _Evaluator(s)
    P, S = params.population_size, s.n_subtasks
    pop = ev.initial(P, rng, params.max_retries)
    z1, z2, z, ok = ev(pop)
    f = np.where(ok[:, None], np.stack([z1, 1.0 - z2], axis=1), INFEASIBLE)
    rank = _kernels.nondominated_ranks(f)
    crowd = _kernels.crowding_distance(f, rank)
    rec = TraceRecorder()

    def record(m):
        front = np.flatnonzero(rank == 0)
        b = front[int(np.argmax(z[front]))]
        rec.record(m, z1[b], z2[b], z[b])

    record(0)
    for m in range(1, params.max_iterations + 1):
        mating = pop[_tournament(rank, crowd, P, rng)]
        pairs, do_cross, cuts = _pairs_and_cuts(P, S, rng, params.crossover_prob,
                                                order=np.arange(P))
        kids = _kernels.crossover_pairs(mating, pairs, do_cross, cuts)
        _position_swaps(kids, params.mutation_prob, rng)
        k1, k2, kz, kok = ev(kids)
        kf = np.where(kok[:, None], np.stack([k1, 1.0 - k2], axis=1), INFEASIBLE)
        union_f = np.concatenate([f, kf])
        keep, rank, crowd = environmental_selection(union_f, P)
        pop = np.concatenate([pop, kids])[keep]
        f = union_f[keep]
        z1 = np.concatenate([z1, k1])[keep]
        z2 = np.concatenate([z2, k2])[keep]
        z = np.concatenate([z, kz])[keep]
        record(m)

    front_idx = np.flatnonzero(rank == 0)
    best = pop[front_idx[int(np.argmax(z[front_idx]))]]
    members, seen = [], set()
    for i in front_idx:
        key = tuple(f[i])
        if key in seen:
            continue
        seen.add(key)
        members.append((decode(pop[i], s), float(f[i, 0]), float(f[i, 1])))
    report = _report("nsga2", s, best, rec, started, _params_dict(params), seed)
    report.extras["front"] = ParetoFront(tuple(members), rank.copy(), crowd.copy())
    return report


def run_first_fit_greedy(s: Scenario, order=None, assign0=None) -> Placement:
    """Place sub-tasks in ``order`` (default: task by task, dependency order)
    on the first node with room, trying used nodes by ascending utilization
    before fresh ones.  ``assign0`` pre-places resident sub-tasks."""
    genes = dependency_order(s.tasks) if order is None else np.asarray(order, dtype=np.int64)
    if assign0 is None:
        assign0 = np.full(s.n_subtasks, -1, dtype=np.int64)
    assign0 = np.asarray(assign0, dtype=np.int64)
    assign, _, _, ok = first_fit_assign(s, genes, node_order(s, assign0), assign0)
    if not ok:
        raise InstanceError("greedy placement ran out of nodes")
    return Placement(s, assign)
