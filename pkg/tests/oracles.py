"""Independent brute-force oracles for the solver tests.

The partial-transport oracle solves, for each transported mass on a dense
grid, the plan LP ``min <cost, gamma>`` subject to row sums <= supplies,
column sums <= demands and a prescribed total, with a self-contained
two-phase Bland-rule simplex (jitted; Bland's rule rules out cycling).
Nothing here shares code with the successive-shortest-paths solver under
test; a slower scipy sweep cross-validates the simplex itself.
"""

from __future__ import annotations

import numpy as np
from scipy import optimize

from unbalanced_ot.exact_ot import cost_matrix

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


@njit(cache=True)
def _pivot(tableau, basis, row, col):
    piv = tableau[row, col]
    tableau[row, :] /= piv
    n_rows = tableau.shape[0]
    for r in range(n_rows):
        if r != row and tableau[r, col] != 0.0:
            tableau[r, :] -= tableau[r, col] * tableau[row, :]
    basis[row] = col


@njit(cache=True)
def _bland_iterate(tableau, basis, n_allowed, tol):
    """Run Bland-rule simplex iterations in place; return 0 on optimality."""
    n_rows = tableau.shape[0] - 1
    while True:
        enter = -1
        for j in range(n_allowed):
            if tableau[n_rows, j] < -tol:
                enter = j
                break
        if enter < 0:
            return 0
        leave = -1
        best_ratio = np.inf
        for i in range(n_rows):
            coef = tableau[i, enter]
            if coef > tol:
                ratio = tableau[i, -1] / coef
                if ratio < best_ratio - 1e-15 or (
                    ratio < best_ratio + 1e-15
                    and (leave < 0 or basis[i] < basis[leave])
                ):
                    best_ratio = ratio
                    leave = i
        if leave < 0:
            return 1  # unbounded
        _pivot(tableau, basis, leave, enter)


@njit(cache=True)
def _simplex_two_phase(a_mat, b_vec, c_vec, tol=1e-11):
    """min c.x s.t. a_mat x = b_vec (b >= 0), x >= 0. Returns (status, value).

    status: 0 optimal, 1 unbounded, 2 infeasible.
    """
    n_rows, n_cols = a_mat.shape
    width = n_cols + n_rows + 1
    tableau = np.zeros((n_rows + 1, width))
    basis = np.empty(n_rows, np.int64)
    for i in range(n_rows):
        for j in range(n_cols):
            tableau[i, j] = a_mat[i, j]
        tableau[i, n_cols + i] = 1.0
        tableau[i, -1] = b_vec[i]
        basis[i] = n_cols + i
    # phase-1 reduced costs: artificials priced out of sum(artificials)
    for j in range(width):
        s = 0.0
        for i in range(n_rows):
            s += tableau[i, j]
        tableau[n_rows, j] = -s
    for i in range(n_rows):
        tableau[n_rows, n_cols + i] = 0.0
    status = _bland_iterate(tableau, basis, n_cols, tol)
    if status != 0:
        return 2, 0.0
    if -tableau[n_rows, -1] > 1e-7:
        return 2, 0.0
    # drive leftover artificials out of the basis where possible
    for i in range(n_rows):
        if basis[i] >= n_cols:
            for j in range(n_cols):
                if abs(tableau[i, j]) > tol:
                    _pivot(tableau, basis, i, j)
                    break
    # phase 2: rebuild reduced costs for the real objective
    for j in range(width):
        tableau[n_rows, j] = 0.0
    for j in range(n_cols):
        red = c_vec[j]
        for i in range(n_rows):
            if basis[i] < n_cols:
                red -= c_vec[basis[i]] * tableau[i, j]
        tableau[n_rows, j] = red
    value = 0.0
    for i in range(n_rows):
        if basis[i] < n_cols:
            value += c_vec[basis[i]] * tableau[i, -1]
    tableau[n_rows, -1] = -value
    status = _bland_iterate(tableau, basis, n_cols, tol)
    if status != 0:
        return 1, 0.0
    value = 0.0
    for i in range(n_rows):
        if basis[i] < n_cols:
            value += c_vec[basis[i]] * tableau[i, -1]
    return 0, value


@njit(cache=True)
def _partial_lp_sweep(cost, supplies, demands, masses):
    """rho(m) for every grid mass, each by an independent simplex solve."""
    n, m = cost.shape
    n_vars = n * m + n + m
    n_rows = n + m + 1
    a_mat = np.zeros((n_rows, n_vars))
    for i in range(n):
        for j in range(m):
            a_mat[i, i * m + j] = 1.0
            a_mat[n + j, i * m + j] = 1.0
            a_mat[n_rows - 1, i * m + j] = 1.0
        a_mat[i, n * m + i] = 1.0
    for j in range(m):
        a_mat[n + j, n * m + n + j] = 1.0
    c_vec = np.zeros(n_vars)
    for i in range(n):
        for j in range(m):
            c_vec[i * m + j] = cost[i, j]
    b_vec = np.empty(n_rows)
    out = np.empty(len(masses))
    for idx in range(len(masses)):
        if masses[idx] <= 0.0:
            out[idx] = 0.0
            continue
        for i in range(n):
            b_vec[i] = supplies[i]
        for j in range(m):
            b_vec[n + j] = demands[j]
        b_vec[n_rows - 1] = masses[idx]
        status, value = _simplex_two_phase(a_mat, b_vec, c_vec)
        out[idx] = value if status == 0 else np.nan
    return out


def partial_cost_grid(mu, nu, p, masses):
    """Oracle rho on a mass grid (numba simplex per grid point)."""
    cost = cost_matrix(mu, nu, p)
    return _partial_lp_sweep(
        np.ascontiguousarray(cost),
        np.ascontiguousarray(mu.weights),
        np.ascontiguousarray(nu.weights),
        np.ascontiguousarray(np.asarray(masses, dtype=np.float64)),
    )


def partial_cost_scipy(mu, nu, p, mass):
    """Same LP through scipy (used to validate the simplex itself)."""
    n, m = mu.atom_count, nu.atom_count
    cost = cost_matrix(mu, nu, p).ravel()
    a_ub = np.zeros((n + m, n * m))
    for i in range(n):
        a_ub[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        a_ub[n + j, j::m] = 1.0
    b_ub = np.concatenate([mu.weights, nu.weights])
    res = optimize.linprog(
        cost,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=np.ones((1, n * m)),
        b_eq=[mass],
        bounds=(0, None),
        method="highs",
    )
    if not res.success:
        return np.nan
    return float(res.fun)


def brute_force_cost(mu, nu, a, b, p, n_grid=10_000, extra_masses=()):
    """Dense-grid joint minimization of the generalized-distance objective.

    Evaluates ``a^p (S - 2m)^p + b^p m^(p-1) rho_LP(m)`` over a uniform
    ``n_grid``-point mass grid (plus any caller-supplied masses, e.g. the
    solver's claimed optimum, so that kink minima between grid points do
    not inflate the comparison) and returns the minimum.
    """
    total = mu.total_mass() + nu.total_mass()
    m_max = min(mu.total_mass(), nu.total_mass())
    masses = np.linspace(0.0, m_max, n_grid)
    if len(extra_masses):
        keep = [mass for mass in extra_masses if 0.0 <= mass <= m_max]
        masses = np.unique(np.concatenate([masses, np.asarray(keep)]))
    rho = partial_cost_grid(mu, nu, p, masses)
    best = a**p * total**p  # m = 0
    for mass, rho_m in zip(masses, rho):
        if not np.isfinite(rho_m):
            continue
        wp_p = mass ** (p - 1.0) * rho_m if mass > 0 else 0.0
        best = min(best, a**p * (total - 2.0 * mass) ** p + b**p * wp_p)
    return float(best)
