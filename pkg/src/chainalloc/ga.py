"""Stage 1: permutation GA with first-fit decoding, maximising compute utilization.

An individual is a permutation of all sub-tasks (flat indices, numpy int64).
Decoding scans the genes left to right and puts each one on the lowest-index
node that still has room for it on CPU, memory, GPU and bandwidth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .model import (InstanceError, Placement, Scenario, SubTaskId, objectives_from_usage, subtask_costs,
                    usage_matrix)


class DecodeError(InstanceError):
    """Some gene fits on no node given the genes placed before it."""


@dataclass(frozen=True)
class GAParams:
    population_size: int = 16
    max_iterations: int = 5
    crossover_prob: float = 1.0
    mutation_prob: float = 0.1
    max_retries: int = 1000  # fresh individuals tried per infeasible decode

    def __post_init__(self):
        if self.population_size < 2 or self.population_size % 2:
            raise ValueError("population_size must be even and >= 2")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        for p in (self.crossover_prob, self.mutation_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")


def as_genes(ind, s: Scenario) -> np.ndarray:
    """Flat int64 genes from an array or a sequence of :class:`SubTaskId`."""
    if isinstance(ind, np.ndarray):
        return ind.astype(np.int64, copy=False)
    return np.array([s.flat(g) for g in ind], dtype=np.int64)


def as_ids(ind: Sequence[int], s: Scenario) -> list[SubTaskId]:
    return [s.ids[int(g)] for g in ind]


def is_permutation(ind, n: int) -> bool:
    arr = np.asarray(ind)
    return arr.shape == (n,) and np.array_equal(np.sort(arr), np.arange(n))


def first_fit_assign(s: Scenario, genes: np.ndarray, node_order: np.ndarray | None = None,
                     assign0: np.ndarray | None = None):
    """Run the first-fit kernel; returns ``(assign, usage, count, ok)``.

    ``assign0`` pre-places sub-tasks (``-1`` = free); their usage and costs
    are charged before the genes are scanned.
    """
    S, K = s.n_subtasks, s.K
    if node_order is None:
        node_order = np.arange(K, dtype=np.int64)
    if assign0 is None:
        assign0 = np.full(S, -1, dtype=np.int64)
        usage0 = np.zeros((K, 4))
        count0 = np.zeros(K, dtype=np.int64)
        cost0 = np.zeros(S)
    else:
        cost0 = subtask_costs(assign0, s)
        usage0 = usage_matrix(assign0, s, cost0)
        count0 = np.bincount(assign0[assign0 >= 0], minlength=K).astype(np.int64)
    return _kernels.first_fit(genes, node_order, s.demand, s.capacity, assign0, usage0, count0, cost0,
                              s.pred_ptr, s.pred_idx, s.succ_ptr, s.succ_idx)


def decode(ind, s: Scenario) -> Placement:
    genes = as_genes(ind, s)
    if not is_permutation(genes, s.n_subtasks):
        raise ValueError("individual is not a permutation of the sub-task set")
    assign, _, _, ok = first_fit_assign(s, genes)
    if not ok:
        raise DecodeError("individual cannot be decoded onto the available nodes")
    return Placement(s, assign)


def fitness(ind, s: Scenario) -> float:
    """Compute utilization of the decoded individual, 0 if it cannot be decoded."""
    genes = as_genes(ind, s)
    _, usage, count, ok = first_fit_assign(s, genes)
    if not ok:
        return 0.0
    return objectives_from_usage(usage, count > 0, s)[0]


def roulette_select(pop: Sequence, fitnesses: Sequence[float], rng, n: int | None = None) -> list:
    """Fitness-proportionate draws with replacement.

    Individuals are ranked by ascending fitness (stable), the cumulative
    fitness mass forms the CDF and each draw inverts it.  All-zero fitness
    falls back to uniform draws.
    """
    n = len(pop) if n is None else n
    f = np.asarray(fitnesses, dtype=float)
    if (f < 0).any():
        raise ValueError("fitness values must be non-negative")
    order = np.argsort(f, kind="stable")
    cdf = np.cumsum(f[order])
    total = cdf[-1] if len(cdf) else 0.0
    if total <= 0:
        return [pop[int(i)] for i in rng.integers(0, len(pop), size=n)]
    u = np.asarray(rng.random(n), dtype=float) * total
    picks = np.minimum(np.searchsorted(cdf, u, side="right"), len(pop) - 1)
    return [pop[int(order[k])] for k in picks]


def draw_cuts(n: int, rng) -> tuple[int, int] | None:
    """Two distinct ordered cut points from {1, ..., n-2}; None if n < 4."""
    if n < 4:
        return None
    q0, q1 = sorted(int(q) for q in rng.choice(np.arange(1, n - 1), size=2, replace=False))
    return q0, q1


def _child(first: Sequence, second: Sequence, q0: int, q1: int) -> list:
    child = list(first[:q0])
    seen = set(child)
    for g in second:
        if len(child) == q1:
            break
        if g not in seen:
            child.append(g)
            seen.add(g)
    child.extend(g for g in first if g not in seen)
    return child


def two_point_crossover(parent0: Sequence, parent1: Sequence, rng=None,
                        cuts: tuple[int, int] | None = None):
    """Order-preserving two-point recombination.

    ``child0`` keeps the first ``q0`` genes of ``parent0``, takes the next
    ``q1 - q0`` genes of ``parent1`` it does not already hold (scanning from the
    start), then fills up from ``parent0`` in order.  ``child1`` mirrors it.
    Works on any hashable genes; returns lists, or arrays for array input.
    """
    if cuts is None:
        cuts = draw_cuts(len(parent0), rng)
        if cuts is None:
            return _like(parent0, list(parent0)), _like(parent1, list(parent1))
    q0, q1 = cuts
    if not 0 < q0 < q1 < len(parent0):
        raise ValueError(f"bad cut points {cuts}")
    a, b = list(parent0), list(parent1)
    return _like(parent0, _child(a, b, q0, q1)), _like(parent1, _child(b, a, q0, q1))


def _like(template, genes: list):
    if isinstance(template, np.ndarray):
        return np.array(genes, dtype=template.dtype)
    return genes


def swap_mutation(ind: Sequence, rng):
    """Copy of ``ind`` with two distinct positions exchanged."""
    n = len(ind)
    if n < 2:
        raise ValueError("need at least two genes to swap")
    i, j = (int(x) for x in rng.choice(n, size=2, replace=False))
    out = np.array(ind) if isinstance(ind, np.ndarray) else list(ind)
    out[i], out[j] = out[j], out[i]
    return out


@dataclass
class GAResult:
    best: np.ndarray
    best_fitness: float
    history: list[float]  # best-ever fitness after each generation (index 0 = initial)
    population: list[np.ndarray]


def evolve(initial: list[np.ndarray], score: Callable[[np.ndarray], float | None], params: GAParams,
           rng, regenerate: Callable[[], np.ndarray]) -> GAResult:
    """Roulette -> paired two-point crossover -> swap mutation, full replacement.

    ``score`` returns ``None`` for an undecodable individual, which is then
    replaced by ``regenerate()`` (bounded retries).  The best-ever individual
    is tracked outside the population; ties keep the earlier one.
    """
    P = params.population_size

    def repair(ind):
        f = score(ind)
        tries = 0
        while f is None:
            if tries >= params.max_retries:
                raise DecodeError("no decodable individual found; instance too tight")
            ind = regenerate()
            f = score(ind)
            tries += 1
        return ind, f

    pop, fit = [], []
    for ind in initial:
        ind, f = repair(ind)
        pop.append(ind)
        fit.append(f)
    best_i = int(np.argmax(fit))
    best, best_f = pop[best_i].copy(), fit[best_i]
    history = [best_f]

    for _ in range(params.max_iterations):
        parents = roulette_select(pop, fit, rng)
        order = rng.permutation(P)
        offspring: list[np.ndarray] = []
        for k in range(P // 2):
            a, b = parents[order[2 * k]], parents[order[2 * k + 1]]
            if rng.random() <= params.crossover_prob:
                c0, c1 = two_point_crossover(a, b, rng)
            else:
                c0, c1 = a.copy(), b.copy()
            offspring.extend((c0, c1))
        for _ in range(P):
            j = int(rng.integers(P))
            if rng.random() <= params.mutation_prob:
                offspring[j] = swap_mutation(offspring[j], rng)
        pop, fit = [], []
        for ind in offspring:
            ind, f = repair(ind)
            pop.append(ind)
            fit.append(f)
        gen_best = int(np.argmax(fit))
        if fit[gen_best] > best_f:
            best, best_f = pop[gen_best].copy(), fit[gen_best]
        history.append(best_f)
    return GAResult(best, best_f, history, pop)


def run_improved_ga(s: Scenario, params: GAParams, rng) -> tuple[Placement, tuple[int, ...], GAResult]:
    """Search sub-task orders maximising compute utilization.

    Returns the best decoded placement, its used-node set and the raw result.
    """
    S = s.n_subtasks

    def score(ind):
        _, usage, count, ok = first_fit_assign(s, ind)
        if not ok:
            return None
        return objectives_from_usage(usage, count > 0, s)[0]

    def regenerate():
        return rng.permutation(S).astype(np.int64)

    initial = [regenerate() for _ in range(params.population_size)]
    result = evolve(initial, score, params, rng, regenerate)
    best = decode(result.best, s)
    return best, best.used_nodes(), result
