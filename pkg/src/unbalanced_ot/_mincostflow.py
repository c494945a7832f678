"""Successive shortest paths on a dense bipartite transport graph.

Solves ``min sum_ij cost[i, j] * flow[i, j]`` subject to ``flow >= 0``,
row sums bounded by the supplies, column sums bounded by the demands and a
prescribed total transported mass.  Augmenting along shortest residual
paths keeps every intermediate flow optimal for its own total mass, so a
single run yields the whole parametric cost curve: each augmentation
appends one linear segment whose slope is the (nondecreasing) length of
the shortest augmenting path.

Ties in the Dijkstra searches break towards smaller node indices, which
makes the returned flow deterministic for a fixed input ordering.
"""

from __future__ import annotations

import numpy as np

try:  # pragma: no cover - exercised implicitly by every solve
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


@njit(cache=True)
def _ssp_kernel(cost, supply, demand, budget):  # pragma: no cover - jitted
    n, m = cost.shape
    flow = np.zeros((n, m))
    pot_src = np.zeros(n)
    pot_snk = np.zeros(m)
    rem_s = supply.copy()
    rem_d = demand.copy()

    max_aug = 4 * (n + 1) * (m + 1) + 16
    seg_mass = np.zeros(max_aug)
    seg_len = np.zeros(max_aug)
    nseg = 0

    pushed = 0.0
    eps = 1e-15 * (budget + 1.0)

    dist_s = np.empty(n)
    dist_t = np.empty(m)
    done_s = np.empty(n, np.bool_)
    done_t = np.empty(m, np.bool_)
    par_t = np.empty(m, np.int64)  # sink j was reached from source par_t[j]
    par_s = np.empty(n, np.int64)  # source i was reached back from sink par_s[i]

    while budget - pushed > eps and nseg < max_aug:
        inf = np.inf
        for i in range(n):
            done_s[i] = False
            par_s[i] = -1
            dist_s[i] = 0.0 if rem_s[i] > 0.0 else inf
            if rem_s[i] > 0.0:
                par_s[i] = -2  # root
        for j in range(m):
            done_t[j] = False
            par_t[j] = -1
            dist_t[j] = inf

        # Dijkstra over sources (even side) and sinks (odd side), dense scans.
        while True:
            best = inf
            side = -1
            node = -1
            for i in range(n):
                if not done_s[i] and dist_s[i] < best:
                    best = dist_s[i]
                    side = 0
                    node = i
            for j in range(m):
                if not done_t[j] and dist_t[j] < best:
                    best = dist_t[j]
                    side = 1
                    node = j
            if side < 0:
                break
            if side == 0:
                i = node
                done_s[i] = True
                di = dist_s[i]
                pi = pot_src[i]
                for j in range(m):
                    if not done_t[j]:
                        rc = cost[i, j] - pi - pot_snk[j]
                        if rc < 0.0:
                            rc = 0.0  # float round-off guard
                        nd = di + rc
                        if nd < dist_t[j]:
                            dist_t[j] = nd
                            par_t[j] = i
            else:
                j = node
                done_t[j] = True
                dj = dist_t[j]
                # backward arcs carry zero reduced cost on tight flow arcs
                for i in range(n):
                    if not done_s[i] and flow[i, j] > 0.0 and dj < dist_s[i]:
                        dist_s[i] = dj
                        par_s[i] = j

        # cheapest reachable sink with remaining demand
        target = -1
        best_d = inf
        for j in range(m):
            if rem_d[j] > 0.0 and dist_t[j] < best_d:
                best_d = dist_t[j]
                target = j
        if target < 0:
            break  # supplies or demands exhausted / unreachable

        # walk the path backwards to find the bottleneck and the true length
        delta = budget - pushed
        length = 0.0
        j = target
        if rem_d[j] < delta:
            delta = rem_d[j]
        while True:
            i = par_t[j]
            length += cost[i, j]
            if par_s[i] == -2:
                if rem_s[i] < delta:
                    delta = rem_s[i]
                root = i
                break
            jp = par_s[i]
            length -= cost[i, jp]
            if flow[i, jp] < delta:
                delta = flow[i, jp]
            j = jp
        if delta <= 0.0:
            break  # degenerate float residual; cannot make progress

        # apply the augmentation
        j = target
        while True:
            i = par_t[j]
            flow[i, j] += delta
            if par_s[i] == -2:
                break
            jp = par_s[i]
            flow[i, jp] -= delta
            if flow[i, jp] < 0.0:
                flow[i, jp] = 0.0
            j = jp
        rem_s[root] -= delta
        if rem_s[root] < 0.0:
            rem_s[root] = 0.0
        rem_d[target] -= delta
        if rem_d[target] < 0.0:
            rem_d[target] = 0.0
        pushed += delta
        seg_mass[nseg] = pushed
        seg_len[nseg] = length
        nseg += 1

        # potential update (capped at the target distance) keeps reduced
        # costs nonnegative for the next search
        dcap = best_d
        for i in range(n):
            ds = dist_s[i]
            if ds > dcap:
                ds = dcap
            pot_src[i] += dcap - ds
        for j in range(m):
            dt = dist_t[j]
            if dt > dcap:
                dt = dcap
            pot_snk[j] -= dcap - dt

    return flow, seg_mass[:nseg], seg_len[:nseg], pushed


def solve_partial_transport(
    cost: np.ndarray,
    supply: np.ndarray,
    demand: np.ndarray,
    budget: float | None = None,
):
    """Optimal partial transport up to a total-mass budget.

    Returns ``(flow, segment_masses, segment_lengths, transported)`` where
    ``segment_masses`` are the cumulative transported masses after each
    augmentation and ``segment_lengths`` the corresponding per-unit costs
    (the slopes of the piecewise-linear parametric cost curve).
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    supply = np.ascontiguousarray(supply, dtype=np.float64)
    demand = np.ascontiguousarray(demand, dtype=np.float64)
    n, m = cost.shape
    if supply.shape != (n,) or demand.shape != (m,):
        raise ValueError("cost, supply and demand shapes disagree")
    max_mass = min(supply.sum(), demand.sum())
    if budget is None or budget > max_mass:
        budget = max_mass
    if n == 0 or m == 0 or budget <= 0.0:
        return np.zeros((n, m)), np.zeros(0), np.zeros(0), 0.0
    return _ssp_kernel(cost, supply, demand, float(budget))
