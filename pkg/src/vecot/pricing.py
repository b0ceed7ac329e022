"""Price-induced partitions and the dual functional.

Agent ``i`` earns ``p_i . zeta(x_t) - c_i(x_t)`` from point ``t``; the null agent
earns 0. Each point goes to an income maximizer, and ``phi`` is the clamped
maximal income. The dual functional
``<P, M> - sum_t w_t phi_t`` is concave in ``P`` with supergradient
``M - M(P)``.
"""

from collections.abc import Mapping

import numpy as np

from ._validation import check_costs, check_demand, check_prices
from .exceptions import SizeMismatch, TooManyTies
from .lp import LinearProgram, solve_lp
from .partition import _enumerate_matches, demand_of

TIE_TOL = 1e-12
MAX_COMPLETIONS = 2**20


def _prepare(measure, costs, prices):
    prices = check_prices(prices, measure.n_layers)
    costs = check_costs(costs, measure, prices.shape[0])
    return costs, prices


def incomes(measure, costs, prices):
    """``(T, n + 1)`` income table; column 0 is the null agent (always 0)."""
    costs, prices = _prepare(measure, costs, prices)
    u = measure.densities @ prices.T - costs.T
    return np.hstack([np.zeros((measure.n_points, 1)), u])


def phi(measure, costs, prices):
    """Clamped maximal income ``max(0, max_k p_k . zeta - c_k)`` at every point."""
    return incomes(measure, costs, prices).max(axis=1)


def phi_at(measure, costs, prices, t):
    if not 0 <= t < measure.n_points:
        raise IndexError(f"point index {t} out of range for T={measure.n_points}")
    return float(phi(measure, costs, prices)[t])


def tie_sets(measure, costs, prices, tie_tol=TIE_TOL):
    """Per point, the labels whose income is within ``tie_tol`` of the maximum."""
    u = incomes(measure, costs, prices)
    mask = u >= u.max(axis=1, keepdims=True) - tie_tol
    return [np.flatnonzero(row) for row in mask]


def _labels_from_table(u, tie_rule, tie_tol):
    mask = u >= u.max(axis=1, keepdims=True) - tie_tol
    labels = np.argmax(mask, axis=1)
    if tie_rule in (None, "lowest"):
        return labels
    if not isinstance(tie_rule, Mapping):
        raise ValueError(f"unknown tie rule {tie_rule!r}")
    for t, lab in tie_rule.items():
        if not mask[t, lab]:
            raise ValueError(f"override sends point {t} to label {lab}, which is not an income maximizer")
        labels[t] = lab
    return labels


def assign_by_price(measure, costs, prices, tie_rule=None, tie_tol=TIE_TOL):
    """Label every point with an income-maximizing agent.

    Parameters
    ----------
    measure : LayeredMeasure
    costs : array-like of shape (n, T) or None
        ``None`` means zero cost.
    prices : array-like of shape (n, q)
    tie_rule : None, "lowest" or mapping
        ``None``/``"lowest"`` picks the lowest tied label, so a tie with the null
        agent (maximal income exactly 0) goes to label 0. A mapping
        ``{t: label}`` overrides the choice at tied points.
    tie_tol : float
        Incomes within this distance of the maximum count as tied.
    """
    return _labels_from_table(incomes(measure, costs, prices), tie_rule, tie_tol)


def zero_cost_assign(measure, prices, tie_rule=None, tie_tol=TIE_TOL):
    """Price-induced assignment with zero production cost."""
    return assign_by_price(measure, None, prices, tie_rule, tie_tol)


def induced_demand(measure, costs, prices, tie_rule=None, tie_tol=TIE_TOL):
    prices = check_prices(prices, measure.n_layers)
    labels = assign_by_price(measure, costs, prices, tie_rule, tie_tol)
    return demand_of(measure, labels, prices.shape[0])


def dual_objective(measure, costs, prices, target):
    """``sum_ij P_ij M_ij - sum_t w_t phi_t``; the pairing is the Frobenius product."""
    prices = check_prices(prices, measure.n_layers)
    target = check_demand(target, measure.n_layers, prices.shape[0])
    return float(np.sum(prices * target) - measure.weights @ phi(measure, costs, prices))


def dual_supergradient(measure, costs, prices, target, tie_rule=None, tie_tol=TIE_TOL):
    """``target - induced_demand``; the gradient of the dual wherever no point is tied."""
    prices = check_prices(prices, measure.n_layers)
    target = check_demand(target, measure.n_layers, prices.shape[0])
    return target - induced_demand(measure, costs, prices, tie_rule, tie_tol)


def completion_residual(measure, costs, prices, target, tie_tol=TIE_TOL, sets=None):
    """Smallest sup-norm residual over fractional splits of the tied points.

    Untied points keep their unique label; a tied point may spread its mass
    over its tied labels. This is the distance (sup-norm) from ``0`` to the
    superdifferential of the dual at ``prices``.

    Returns
    -------
    residual : float
    plan : ndarray of shape (T, n + 1)
        A fractional assignment attaining the residual.
    """
    prices = check_prices(prices, measure.n_layers)
    n, q, T = prices.shape[0], measure.n_layers, measure.n_points
    target = check_demand(target, q, n)
    if sets is None:
        sets = tie_sets(measure, costs, prices, tie_tol)
    plan = np.zeros((T, n + 1))
    lw = measure.layer_weights
    tied = [t for t in range(T) if sets[t].size > 1]
    for t in range(T):
        if sets[t].size == 1:
            plan[t, sets[t][0]] = 1.0
    gap = target - plan[:, 1:].T @ lw
    if not tied:
        return float(np.abs(gap).max(initial=0.0)), plan

    var = [(t, a) for t in tied for a in sets[t]]
    nv = len(var) + 1
    A_eq = np.zeros((len(tied), nv))
    A_dem = np.zeros((n * q, nv))
    row_of = {t: r for r, t in enumerate(tied)}
    for k, (t, a) in enumerate(var):
        A_eq[row_of[t], k] = 1.0
        if a > 0:
            A_dem[(a - 1) * q:a * q, k] = lw[t]
    g = gap.ravel()
    r_col = np.zeros((n * q, 1))
    r_col[:] = 1.0
    A_ub = np.vstack([np.hstack([A_dem[:, :-1], -r_col]), np.hstack([-A_dem[:, :-1], -r_col])])
    c = np.zeros(nv)
    c[-1] = 1.0
    p = LinearProgram.from_blocks(c, ub=(A_ub, np.concatenate([g, -g])), eq=(A_eq, np.ones(len(tied))))
    sol = solve_lp(p)
    for k, (t, a) in enumerate(var):
        plan[t, a] = max(sol.x[k], 0.0)
    return max(float(sol.objective), 0.0), plan


def is_equilibrium(measure, costs, prices, target, tol=1e-9, allow_tie_search=True,
                   split_ties=False, tie_tol=TIE_TOL, max_completions=MAX_COMPLETIONS):
    """Does some completion of the price-induced assignment meet ``target``?

    With ``allow_tie_search=False`` only the lowest-index completion is
    checked. Otherwise every integral relabelling of the tied points is tried
    (at most ``max_completions``), or, with ``split_ties=True``, tied points may
    be split fractionally and the check is an LP.

    Raises
    ------
    TooManyTies
        Integral search would exceed ``max_completions``.
    """
    prices = check_prices(prices, measure.n_layers)
    n = prices.shape[0]
    target = check_demand(target, measure.n_layers, n)
    sets = tie_sets(measure, costs, prices, tie_tol)
    if split_ties and allow_tie_search:
        return completion_residual(measure, costs, prices, target, tie_tol, sets)[0] <= tol
    labels = np.array([s[0] for s in sets])
    residual = target - demand_of(measure, labels, n)
    if np.abs(residual).max(initial=0.0) <= tol:
        return True
    if not allow_tie_search:
        return False
    tied = np.array([t for t, s in enumerate(sets) if s.size > 1], dtype=np.int64)
    if tied.size == 0:
        return False
    fixed = labels.copy()
    fixed[tied] = 0
    rest = target - demand_of(measure, fixed, n)
    first, _ = _enumerate_matches([sets[t] for t in tied], measure.layer_weights[tied], n, rest,
                                  tol, max_completions, stop_at_first=True, error=TooManyTies)
    return first is not None


def price_incomes_for(densities, costs, prices):
    """Income table for arbitrary density rows (used to price points outside a measure)."""
    densities = np.atleast_2d(np.asarray(densities, dtype=np.float64))
    prices = np.atleast_2d(np.asarray(prices, dtype=np.float64))
    if densities.shape[1] != prices.shape[1]:
        raise SizeMismatch(f"densities have {densities.shape[1]} layers, prices {prices.shape[1]}")
    u = densities @ prices.T
    if costs is not None:
        u = u - np.asarray(costs, dtype=np.float64).T
    return np.hstack([np.zeros((densities.shape[0], 1)), u])
