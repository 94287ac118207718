"""Compiled inner loops shared by the evolutionary solvers.

All randomness is drawn by the callers (numpy ``Generator``) and passed in, so
every kernel is a pure function of its arguments.
"""

import numpy as np
from numba import njit

TOL = 1e-9


@njit(cache=True)
def first_fit(order, node_order, demand, capacity, assign0, usage0, count0, cost0,
              pred_ptr, pred_idx, succ_ptr, succ_idx):
    """Place the sub-tasks of ``order`` one by one on the first node of
    ``node_order`` satisfying all four capacities.

    Bandwidth is charged against the partial placement: an unplaced
    predecessor counts as remote, so costs can only drop as later genes land.
    Returns ``(assign, usage, count, ok)``; ``ok`` is False when some gene fits
    nowhere (the partial state is returned as-is).
    """
    assign = assign0.copy()
    usage = usage0.copy()
    count = count0.copy()
    cost = cost0.copy()
    for g in order:
        placed = False
        for i in node_order:
            if (usage[i, 0] + demand[g, 0] > capacity[i, 0] + TOL
                    or usage[i, 1] + demand[g, 1] > capacity[i, 1] + TOL
                    or usage[i, 2] + demand[g, 2] > capacity[i, 2] + TOL):
                continue
            c = 0.0
            if pred_ptr[g] == pred_ptr[g + 1]:
                c = demand[g, 3]
            else:
                for e in range(pred_ptr[g], pred_ptr[g + 1]):
                    if assign[pred_idx[e]] != i:
                        c = demand[g, 3]
                        break
            relief = 0.0
            for e in range(succ_ptr[g], succ_ptr[g + 1]):
                u = succ_idx[e]
                if assign[u] != i or cost[u] == 0.0:
                    continue
                local = True
                for f in range(pred_ptr[u], pred_ptr[u + 1]):
                    q = pred_idx[f]
                    if q != g and assign[q] != i:
                        local = False
                        break
                if local:
                    relief += cost[u]
            if usage[i, 3] + c - relief > capacity[i, 3] + TOL:
                continue
            assign[g] = i
            cost[g] = c
            usage[i, 0] += demand[g, 0]
            usage[i, 1] += demand[g, 1]
            usage[i, 2] += demand[g, 2]
            usage[i, 3] += c - relief
            count[i] += 1
            if relief > 0.0:
                for e in range(succ_ptr[g], succ_ptr[g + 1]):
                    u = succ_idx[e]
                    if assign[u] != i:
                        continue
                    local = True
                    for f in range(pred_ptr[u], pred_ptr[u + 1]):
                        if assign[pred_idx[f]] != i:
                            local = False
                            break
                    if local:
                        cost[u] = 0.0
            placed = True
            break
        if not placed:
            return assign, usage, count, False
    return assign, usage, count, True


@njit(cache=True)
def objectives(usage, count, capacity, alpha, beta1, beta2):
    """(z1, z2, z) over nodes with a positive sub-task count; NaNs if none."""
    k_a = 0
    s1 = 0.0
    s2 = 0.0
    for i in range(usage.shape[0]):
        if count[i] <= 0:
            continue
        k_a += 1
        for r in range(3):
            if capacity[i, r] > 0:
                s1 += alpha[r] * usage[i, r] / capacity[i, r]
        if capacity[i, 3] > 0:
            s2 += usage[i, 3] / capacity[i, 3]
    if k_a == 0:
        return np.nan, np.nan, np.nan
    z1 = s1 / k_a
    z2 = s2 / k_a
    return z1, z2, beta1 * z1 + beta2 * (1.0 - z2)


@njit(cache=True)
def decode_batch(pop, node_order, demand, capacity, alpha, beta1, beta2,
                 pred_ptr, pred_idx, succ_ptr, succ_idx):
    """Decode every row of ``pop`` from an empty cluster; returns (z1, z2, ok)."""
    n, S = pop.shape
    K = capacity.shape[0]
    z1 = np.zeros(n)
    z2 = np.zeros(n)
    ok = np.zeros(n, dtype=np.bool_)
    assign0 = -np.ones(S, dtype=np.int64)
    usage0 = np.zeros((K, 4))
    count0 = np.zeros(K, dtype=np.int64)
    cost0 = np.zeros(S)
    for r in range(n):
        _, usage, count, good = first_fit(pop[r], node_order, demand, capacity, assign0, usage0,
                                          count0, cost0, pred_ptr, pred_idx, succ_ptr, succ_idx)
        ok[r] = good
        if good:
            a, b, _ = objectives(usage, count, capacity, alpha, beta1, beta2)
            z1[r] = a
            z2[r] = b
    return z1, z2, ok


@njit(cache=True)
def two_point_child(first, second, q0, q1, out):
    """Write into ``out``: ``first[:q0]``, then the next ``q1 - q0`` unseen genes of
    ``second``, then the unseen rest of ``first``.  Genes must be 0..S-1."""
    S = first.shape[0]
    seen = np.zeros(S, dtype=np.bool_)
    k = 0
    for j in range(q0):
        out[k] = first[j]
        seen[first[j]] = True
        k += 1
    taken = 0
    for j in range(S):
        if taken == q1 - q0:
            break
        g = second[j]
        if not seen[g]:
            out[k] = g
            seen[g] = True
            k += 1
            taken += 1
    for j in range(S):
        g = first[j]
        if not seen[g]:
            out[k] = g
            seen[g] = True
            k += 1


@njit(cache=True)
def crossover_pairs(pop, pairs, do_cross, cuts):
    """Children of each parent pair (two rows per pair, in pair order)."""
    n_pairs = pairs.shape[0]
    S = pop.shape[1]
    out = np.empty((2 * n_pairs, S), dtype=pop.dtype)
    for r in range(n_pairs):
        a = pop[pairs[r, 0]]
        b = pop[pairs[r, 1]]
        if do_cross[r]:
            two_point_child(a, b, cuts[r, 0], cuts[r, 1], out[2 * r])
            two_point_child(b, a, cuts[r, 0], cuts[r, 1], out[2 * r + 1])
        else:
            out[2 * r] = a
            out[2 * r + 1] = b
    return out


@njit(cache=True)
def nondominated_ranks(f):
    """Pareto rank (0 = non-dominated) of each row of ``f`` under maximisation."""
    n, m = f.shape
    dominated_by = np.zeros(n, dtype=np.int64)
    dominates = np.zeros((n, n), dtype=np.bool_)
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            ge = True
            gt = False
            for k in range(m):
                if f[p, k] < f[q, k]:
                    ge = False
                    break
                if f[p, k] > f[q, k]:
                    gt = True
            if ge and gt:
                dominates[p, q] = True
                dominated_by[q] += 1
    rank = -np.ones(n, dtype=np.int64)
    current = 0
    front = np.empty(n, dtype=np.int64)
    size = 0
    for p in range(n):
        if dominated_by[p] == 0:
            front[size] = p
            size += 1
            rank[p] = 0
    while size > 0:
        nxt = np.empty(n, dtype=np.int64)
        nsize = 0
        for a in range(size):
            p = front[a]
            for q in range(n):
                if dominates[p, q]:
                    dominated_by[q] -= 1
                    if dominated_by[q] == 0:
                        rank[q] = current + 1
                        nxt[nsize] = q
                        nsize += 1
        current += 1
        front = nxt
        size = nsize
    return rank


@njit(cache=True)
def apply_swaps(pop, rows, pos, partners):
    """In-place sequential swaps ``pop[r, pos] <-> pop[r, partner]``."""
    for k in range(rows.shape[0]):
        r = rows[k]
        a = pos[k]
        b = partners[k]
        tmp = pop[r, a]
        pop[r, a] = pop[r, b]
        pop[r, b] = tmp


@njit(cache=True)
def crowding_distance(f, rank):
    """Crowding distance of every row within its own front (inf at the edges)."""
    n, m = f.shape
    dist = np.zeros(n)
    if n == 0:
        return dist
    for r in range(rank.max() + 1):
        members = np.flatnonzero(rank == r)
        size = members.shape[0]
        if size == 0:
            continue
        if size <= 2:
            for a in range(size):
                dist[members[a]] = np.inf
            continue
        for k in range(m):
            vals = f[members, k]
            order = np.argsort(vals, kind="mergesort")
            lo = vals[order[0]]
            hi = vals[order[size - 1]]
            dist[members[order[0]]] = np.inf
            dist[members[order[size - 1]]] = np.inf
            if hi - lo <= 0.0:
                continue
            for a in range(1, size - 1):
                dist[members[order[a]]] += (vals[order[a + 1]] - vals[order[a - 1]]) / (hi - lo)
    return dist
