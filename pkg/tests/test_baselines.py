import numpy as np
import pytest

from chainalloc import _kernels
from chainalloc.baselines import (INFEASIBLE, BaselineParams, dominates, environmental_selection, run_first_fit_greedy,
                                  run_ga_baseline, run_nsga2)
from chainalloc.model import InstanceError, ResourceVector, Scenario, evaluate, is_feasible
from chainalloc.scenario import make_scenario
from conftest import toy_task

SMALL = BaselineParams(population_size=20, max_iterations=60)


def brute_fronts(f):
    """Non-dominated rank by repeated peeling (quadratic oracle)."""
    rank = np.full(len(f), -1)
    left = set(range(len(f)))
    r = 0
    while left:
        front = {i for i in left if not any(dominates(f[j], f[i]) for j in left if j != i)}
        for i in front:
            rank[i] = r
        left -= front
        r += 1
    return rank


def test_dominance():
    assert dominates((0.8, 0.9), (0.7, 0.9))
    assert not dominates((0.7, 0.9), (0.8, 0.9))
    assert not dominates((0.8, 0.9), (0.8, 0.9))
    assert not dominates((0.9, 0.1), (0.1, 0.9))


def test_nondominated_ranks_match_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 40))
        f = rng.integers(0, 6, size=(n, 2)).astype(float)  # ties on purpose
        assert np.array_equal(_kernels.nondominated_ranks(f), brute_fronts(f))


def test_crowding_boundaries_infinite():
    f = np.array([[0.0, 1.0], [0.5, 0.5], [1.0, 0.0], [0.2, 0.8], [0.1, 0.1]])
    rank = _kernels.nondominated_ranks(f)
    crowd = _kernels.crowding_distance(f, rank)
    front = np.flatnonzero(rank == 0)
    assert set(front) == {0, 1, 2, 3}
    assert np.isinf(crowd[0]) and np.isinf(crowd[2])
    assert np.isfinite(crowd[1]) and np.isfinite(crowd[3])
    assert np.isinf(crowd[4])  # a front of one


def test_environmental_selection_prefers_rank_then_spread():
    f = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.4, 0.4], [0.1, 0.1]])
    keep, rank, _ = environmental_selection(f, 3)
    assert sorted(keep.tolist()) == [0, 1, 2] and rank.tolist() == [0, 0, 0]


def test_identical_parents_give_identical_children():
    pop = np.tile(np.random.default_rng(1).permutation(10), (4, 1)).astype(np.int64)
    pairs = np.array([[0, 1], [2, 3]], dtype=np.int64)
    kids = _kernels.crossover_pairs(pop, pairs, np.array([True, True]), np.array([[2, 5], [1, 8]], dtype=np.int64))
    assert np.array_equal(kids, pop)


def test_params_validation():
    with pytest.raises(ValueError):
        BaselineParams(population_size=7)
    with pytest.raises(ValueError):
        BaselineParams(mutation_prob=2.0)


# -- survival GA ------------------------------------------------------------------------


def test_ga_single_task():
    s = make_scenario(1, 1)
    rep = run_ga_baseline(s, SMALL, np.random.default_rng(0))
    assert rep.z == pytest.approx(0.5 * (1827 / 2900 + 50.88 / 96 + 4 / 8) / 3 + 0.5 * 0.9)


def test_ga_best_ever_monotone_and_consistent():
    s = make_scenario(4, 4)
    rep = run_ga_baseline(s, SMALL, np.random.default_rng(3), seed=3)
    best = [r.best_z for r in rep.trace]
    assert len(rep.trace) == SMALL.max_iterations + 1
    assert all(b >= a for a, b in zip(best, best[1:]))
    assert rep.z == pytest.approx(best[-1]) and rep.z == pytest.approx(evaluate(rep.placement, s)[2])
    assert is_feasible(rep.placement, s) and rep.solver == "ga" and rep.seed == 3


def test_ga_beats_plain_first_fit_small():
    s = make_scenario(4, 4)
    greedy = evaluate(run_first_fit_greedy(s), s)[2]
    rep = run_ga_baseline(s, BaselineParams(40, 300), np.random.default_rng(0))
    assert rep.z >= greedy


def test_ga_deterministic():
    s = make_scenario(4, 4)
    a = run_ga_baseline(s, SMALL, np.random.default_rng(9))
    b = run_ga_baseline(s, SMALL, np.random.default_rng(9))
    assert a.to_json(False) == b.to_json(False)


# -- NSGA-II ------------------------------------------------------------------------------


def test_nsga2_single_point_space():
    s = Scenario((ResourceVector(10, 10, 1, 10),), (toy_task([2]),))
    rep = run_nsga2(s, BaselineParams(4, 5), np.random.default_rng(0))
    front = rep.extras["front"]
    assert len(front) == 1
    assert front.members[0][0].assign.tolist() == [0]


def test_nsga2_front_is_mutually_nondominated():
    s = make_scenario(4, 4)
    rep = run_nsga2(s, SMALL, np.random.default_rng(4), seed=4)
    pts = [(m[1], m[2]) for m in rep.extras["front"].members]
    assert pts
    for a in pts:
        assert not any(dominates(b, a) for b in pts if b != a)
    # the reported member is the front's best scalar score
    assert rep.z == pytest.approx(max(0.5 * a + 0.5 * b for a, b in pts))
    for placement, a, b in rep.extras["front"].members:
        z1, z2, _ = evaluate(placement, s)
        assert (z1, 1 - z2) == pytest.approx((a, b))
    assert all(r.best_z >= q.best_z for q, r in zip(rep.trace, rep.trace[1:]))
    assert "front" not in rep.to_json()


def test_nsga2_infeasible_sentinel_ranks_last():
    f = np.array([[INFEASIBLE, INFEASIBLE], [0.1, 0.1], [0.5, 0.2]])
    assert _kernels.nondominated_ranks(f).tolist() == [2, 1, 0]


# -- greedy ---------------------------------------------------------------------------------


def test_greedy_examples(std8):
    one = make_scenario(1, 3)
    assert run_first_fit_greedy(one).assign.tolist() == [0] * 5
    p = run_first_fit_greedy(std8)
    assert p.k_active == 6 and is_feasible(p, std8)
    assert p == run_first_fit_greedy(std8)


def test_greedy_custom_order_and_residents():
    s = make_scenario(2, 3)
    p = run_first_fit_greedy(s, order=[5, 6, 7, 8, 9, 0, 1, 2, 3, 4])
    # task 1 first fills node 0; task 0 follows until its synchronization stage overflows
    assert p.assign.tolist() == [0, 0, 0, 1, 1] + [0] * 5
    assign0 = np.array([2] * 5 + [-1] * 5)
    q = run_first_fit_greedy(s, order=[5, 6, 7, 8, 9], assign0=assign0)
    # the used node is tried before fresh ones
    assert q.assign.tolist() == [2] * 5 + [2, 2, 2, 0, 0] and is_feasible(q, s)


def test_greedy_out_of_nodes():
    with pytest.raises(InstanceError):
        run_first_fit_greedy(make_scenario(3, 1))
