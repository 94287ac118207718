import numpy as np
import pytest

import oracles
from chainalloc.ga import (DecodeError, GAParams, as_genes, as_ids, decode, draw_cuts, evolve, fitness,
                           is_permutation, roulette_select, run_improved_ga, swap_mutation, two_point_crossover)
from chainalloc.model import ResourceVector, Scenario, SubTaskId, TaskSpec, evaluate, is_feasible
from chainalloc.scenario import make_scenario
from conftest import natural_order, toy_task


class FixedDraws:
    """Stands in for a Generator whose ``random`` yields preset values."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def random(self, n=None):
        return self.values[:n]


def T(l, n):
    return SubTaskId(l, n)


# -- decode -------------------------------------------------------------------------


def test_decode_worked_example(toy):
    p = decode(natural_order(toy), toy)
    assert p.groups() == {
        0: [T(0, 0), T(0, 1), T(0, 3)],
        1: [T(0, 2), T(0, 4), T(1, 0)],
        2: [T(1, 1), T(1, 2), T(1, 3)],
    }
    assert is_feasible(p, toy)


def test_decode_single_subtask():
    s = Scenario((ResourceVector(5, 5, 1, 5),) * 4, (toy_task([2]),))
    assert decode([T(0, 0)], s).assign.tolist() == [0]


def test_decode_natural_order_standard_eight(std8):
    p = decode(np.arange(std8.n_subtasks), std8)
    assert p.k_active == 6
    assert is_feasible(p, std8)


def test_decode_matches_oracle_first_fit():
    rng = np.random.default_rng(21)
    for _ in range(30):
        s = oracles.random_chain_instance(rng, 3, 4, 3, load=0.7)
        for _ in range(10):
            genes = rng.permutation(s.n_subtasks)
            want = oracles.first_fit(genes.tolist(), s)
            if want is None:
                with pytest.raises(DecodeError):
                    decode(genes, s)
            else:
                assert decode(genes, s).assign.tolist() == want


def test_decode_bandwidth_recheck_on_successor():
    # the second head overflows node 0's bandwidth; each successor joins its head at no cost
    node = ResourceVector(100, 100, 1, 100)
    task = TaskSpec((ResourceVector(1, 1, 0, 60), ResourceVector(1, 1, 0, 60)))
    s = Scenario((node, node), (task, task))
    p = decode([0, 2, 1, 3], s)
    assert p.assign.tolist() == [0, 0, 1, 1] and is_feasible(p, s)
    assert p.assign.tolist() == oracles.first_fit([0, 2, 1, 3], s)


def test_decode_rejects_non_permutation(std8):
    with pytest.raises(ValueError):
        decode(np.zeros(std8.n_subtasks, dtype=int), std8)


def test_decode_infeasible():
    s = Scenario((ResourceVector(5, 5, 1, 5),), (toy_task([3]), toy_task([3])))
    with pytest.raises(DecodeError):
        decode([0, 1], s)
    assert fitness([0, 1], s) == 0.0


def test_decode_deterministic(std8):
    genes = np.random.default_rng(0).permutation(std8.n_subtasks)
    assert decode(genes, std8) == decode(genes.copy(), std8)


def test_fitness_is_z1_of_decode(std8):
    rng = np.random.default_rng(1)
    for _ in range(20):
        genes = rng.permutation(std8.n_subtasks)
        assert fitness(genes, std8) == pytest.approx(evaluate(decode(genes, std8), std8)[0], rel=1e-12)


def test_gene_conversions(toy):
    ids = natural_order(toy)
    assert as_genes(ids, toy).tolist() == list(range(9))
    assert as_ids([8, 0], toy) == [T(1, 3), T(0, 0)]
    assert is_permutation(np.arange(9)[::-1], 9) and not is_permutation([0, 0, 1], 3)


# -- selection ------------------------------------------------------------------


def test_roulette_all_mass_on_fitter():
    assert roulette_select(["a", "b"], [0.0, 1.0], FixedDraws([0.3]), n=1) == ["b"]


def test_roulette_two_to_one_odds():
    picks = roulette_select([0, 1], [1.0, 3.0], np.random.default_rng(7), n=10_000)
    assert np.mean(picks) == pytest.approx(0.75, abs=0.03)


@pytest.mark.parametrize("fit", [[2.0, 2.0, 2.0, 2.0], [0.0, 0.0, 0.0, 0.0]])
def test_roulette_uniform_cases(fit):
    picks = roulette_select([0, 1, 2, 3], fit, np.random.default_rng(9), n=8000)
    counts = np.bincount(picks, minlength=4)
    assert np.all(np.abs(counts / 8000 - 0.25) < 0.03)


def test_roulette_rejects_negative():
    with pytest.raises(ValueError):
        roulette_select([0, 1], [-1.0, 2.0], np.random.default_rng(0))


def test_roulette_default_count():
    assert len(roulette_select(list(range(6)), [1] * 6, np.random.default_rng(0))) == 6


# -- crossover and mutation -------------------------------------------------------


def test_crossover_worked_example():
    p0 = [T(0, 3), T(0, 1), T(0, 4), T(1, 0), T(0, 0), T(1, 1), T(0, 2), T(1, 2), T(1, 3)]
    p1 = [T(0, 0), T(0, 4), T(1, 3), T(0, 1), T(1, 2), T(1, 0), T(0, 3), T(1, 1), T(0, 2)]
    c0, c1 = two_point_crossover(p0, p1, cuts=(3, 6))
    assert c0 == [T(0, 3), T(0, 1), T(0, 4), T(0, 0), T(1, 3), T(1, 2), T(1, 0), T(1, 1), T(0, 2)]
    assert c1 == [T(0, 0), T(0, 4), T(1, 3), T(0, 3), T(0, 1), T(1, 0), T(1, 2), T(1, 1), T(0, 2)]


def test_crossover_identical_parents():
    p = np.random.default_rng(2).permutation(12)
    c0, c1 = two_point_crossover(p, p.copy(), np.random.default_rng(3))
    assert np.array_equal(c0, p) and np.array_equal(c1, p)


def test_crossover_extreme_cuts_on_reversed_parents():
    for n in range(4, 30):
        p0 = list(range(n))
        c0, c1 = two_point_crossover(p0, p0[::-1], cuts=(1, n - 2))
        assert sorted(c0) == p0 and sorted(c1) == p0


def test_crossover_bad_cuts():
    with pytest.raises(ValueError):
        two_point_crossover([0, 1, 2, 3, 4], [4, 3, 2, 1, 0], cuts=(2, 2))
    with pytest.raises(ValueError):
        two_point_crossover([0, 1, 2, 3, 4], [4, 3, 2, 1, 0], cuts=(0, 3))


def test_crossover_short_parents_copied():
    c0, c1 = two_point_crossover([0, 1, 2], [2, 1, 0], np.random.default_rng(0))
    assert (c0, c1) == ([0, 1, 2], [2, 1, 0])


def test_draw_cuts():
    rng = np.random.default_rng(4)
    assert draw_cuts(3, rng) is None
    seen = set()
    for _ in range(2000):
        q0, q1 = draw_cuts(6, rng)
        assert 1 <= q0 < q1 <= 4
        seen.add((q0, q1))
    assert len(seen) == 6


def test_swap_mutation_examples():
    rng = np.random.default_rng(0)
    assert swap_mutation([7, 9], rng) == [9, 7]
    ind = np.arange(20)
    out = swap_mutation(ind, rng)
    assert np.sum(out != ind) == 2 and sorted(out) == list(ind)
    assert np.array_equal(ind, np.arange(20))  # input untouched
    with pytest.raises(ValueError):
        swap_mutation([1], rng)


# -- the GA -------------------------------------------------------------------------


def test_ga_params_validation():
    for bad in (dict(population_size=3), dict(population_size=0), dict(crossover_prob=1.5),
                dict(mutation_prob=-0.1), dict(max_iterations=-1)):
        with pytest.raises(ValueError):
            GAParams(**bad)


def test_single_task():
    s = make_scenario(1, 3)
    best, v_a, _ = run_improved_ga(s, GAParams(), np.random.default_rng(0))
    assert v_a == (0,) and best.k_active == 1
    assert evaluate(best, s)[0] == pytest.approx((1827 / 2900 + 50.88 / 96 + 4 / 8) / 3)


def test_standard_eight_uses_six_nodes(std8):
    hits = sum(run_improved_ga(std8, GAParams(), np.random.default_rng(seed))[0].k_active == 6
               for seed in range(10))
    assert hits >= 9


def test_toy_reaches_enumerated_utilization_optimum(toy):
    best_z1, _, _ = oracles.brute_force(toy, key="z1")
    for seed in range(5):
        best, _, _ = run_improved_ga(toy, GAParams(), np.random.default_rng(seed))
        assert evaluate(best, toy)[0] == pytest.approx(best_z1, abs=1e-12)


def test_history_monotone_and_population_valid(std8):
    seen = []

    def score(ind):
        assert is_permutation(ind, std8.n_subtasks)
        seen.append(1)
        return fitness(ind, std8)

    rng = np.random.default_rng(5)
    init = [rng.permutation(std8.n_subtasks) for _ in range(16)]
    res = evolve(init, score, GAParams(16, 20), rng, lambda: rng.permutation(std8.n_subtasks))
    assert len(res.history) == 21 and len(seen) == 16 * 21
    assert all(b >= a for a, b in zip(res.history, res.history[1:]))
    assert res.best_fitness == res.history[-1] == pytest.approx(fitness(res.best, std8))


def test_no_operators_means_no_new_genomes(std8):
    rng = np.random.default_rng(6)
    init = [rng.permutation(std8.n_subtasks) for _ in range(8)]
    keys = {tuple(x) for x in init}
    res = evolve(init, lambda g: fitness(g, std8), GAParams(8, 10, 0.0, 0.0), rng,
                 lambda: rng.permutation(std8.n_subtasks))
    assert {tuple(x) for x in res.population} <= keys


def test_regenerates_undecodable_individuals():
    calls = []

    def score(ind):
        return None if ind[0] == 1 else 1.0

    def regen():
        calls.append(1)
        return np.array([0, 1])

    res = evolve([np.array([1, 0]), np.array([0, 1])], score, GAParams(2, 1), np.random.default_rng(0), regen)
    assert calls and all(ind[0] == 0 for ind in res.population)
    with pytest.raises(DecodeError):
        evolve([np.array([1, 0]), np.array([1, 0])], lambda g: None, GAParams(2, 0, max_retries=3),
               np.random.default_rng(0), lambda: np.array([1, 0]))


def test_run_is_seed_deterministic(std8):
    a = run_improved_ga(std8, GAParams(), np.random.default_rng(42))
    b = run_improved_ga(std8, GAParams(), np.random.default_rng(42))
    assert a[0] == b[0] and a[2].history == b[2].history
