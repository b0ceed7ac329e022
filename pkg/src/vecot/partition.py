"""Sub-partitions, demand matrices and achievability oracles.

An assignment is an integer array of length T with labels in ``0..n``; label 0
is the null agent (unsold mass). A fractional assignment is a ``(T, n + 1)``
row-stochastic matrix whose column 0 is the null agent's share.
"""

from typing import NamedTuple

import numpy as np

from ._validation import check_costs, check_demand, check_labels, check_random_state
from .exceptions import SizeMismatch, TooLarge
from .lp import LinearProgram, feasibility
from .measure import total_mass

ENUMERATION_GUARD = 10**7
DEMAND_TOL = 1e-9


def demand_of(measure, labels, n_agents):
    """Demand matrix ``m_i^j = sum over points labelled i of w_t zeta_j(x_t)``.

    Returns an ``(n_agents, q)`` array. Label-0 points contribute nothing.
    """
    labels = check_labels(labels, measure.n_points, n_agents)
    out = np.zeros((n_agents + 1, measure.n_layers))
    np.add.at(out, labels, measure.layer_weights)
    return out[1:]


def fractional_demand(measure, plan):
    """Demand of a ``(T, n + 1)`` fractional assignment (column 0 ignored)."""
    plan = np.asarray(plan, dtype=np.float64)
    if plan.ndim != 2 or plan.shape[0] != measure.n_points:
        raise SizeMismatch(f"plan has shape {plan.shape}, expected ({measure.n_points}, n + 1)")
    return plan[:, 1:].T @ measure.layer_weights


def monge_cost(measure, costs, labels):
    """Total production cost ``sum_t w_t c_{label_t}(x_t)``; unsold points cost nothing."""
    costs = check_costs(costs, measure)
    labels = check_labels(labels, measure.n_points, costs.shape[0])
    sold = labels > 0
    return float(np.sum(measure.weights[sold] * costs[labels[sold] - 1, np.flatnonzero(sold)]))


def feasible_necessary(demand, measure, tol=DEMAND_TOL):
    """Per-layer necessary condition: column sums of ``demand`` do not exceed the layer masses."""
    demand = check_demand(demand, measure.n_layers)
    return bool(np.all(demand.sum(axis=0) <= total_mass(measure) + tol))


class ExactResult(NamedTuple):
    achievable: bool
    witness: np.ndarray
    count: int


def _enumerate_matches(options, layer_weights, n_agents, target, tol, guard,
                       chunk=1 << 15, stop_at_first=False, error=TooLarge):
    """Scan all label sequences drawn from per-point ``options`` in lexicographic order.

    Returns the first sequence whose demand is within ``tol`` of ``target``
    (sup-norm) and the number of such sequences (1 when ``stop_at_first``).
    """
    radices = np.array([len(o) for o in options], dtype=np.int64)
    total = 1
    for r in radices:
        total *= int(r)
        if total > guard:
            raise error(f"enumeration needs more than {guard} assignments")
    T = len(options)
    lut = np.zeros((T, int(radices.max(initial=1))), dtype=np.int64)
    for t, o in enumerate(options):
        lut[t, : len(o)] = o
    first, count = None, 0
    eye = np.eye(n_agents + 1)
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = np.empty((codes.size, T), dtype=np.int64)
        rest = codes.copy()
        for pos in range(T - 1, -1, -1):
            digits[:, pos] = rest % radices[pos]
            rest //= radices[pos]
        labels = lut[np.arange(T), digits]  # (C, T)
        demand = np.einsum("cti,tj->cij", eye[labels][:, :, 1:], layer_weights)
        hit = np.abs(demand - target).reshape(codes.size, -1).max(axis=1, initial=0.0) <= tol
        if hit.any():
            if first is None:
                first = labels[np.argmax(hit)].copy()
                if stop_at_first:
                    return first, 1
            count += int(hit.sum())
    return first, count


def achievable_exact(demand, measure, tol=DEMAND_TOL, guard=ENUMERATION_GUARD):
    """Brute-force membership test for exactly achievable demands.

    Every label sequence in ``{0..n}^T`` is tried. The result carries the
    lexicographically first matching assignment and the number of matches,
    so ``count == 1`` certifies a unique integral sub-partition.

    Raises
    ------
    TooLarge
        ``(n + 1)^T`` exceeds ``guard``; use :func:`achievable_relaxed` instead.
    """
    demand = check_demand(demand, measure.n_layers)
    n = demand.shape[0]
    if (n + 1) ** measure.n_points > guard:
        raise TooLarge(f"(n + 1)^T = {n + 1}^{measure.n_points} exceeds the guard {guard}")
    if not feasible_necessary(demand, measure, tol):
        return ExactResult(False, None, 0)
    options = [np.arange(n + 1)] * measure.n_points
    first, count = _enumerate_matches(options, measure.layer_weights, n, demand, tol, guard)
    return ExactResult(first is not None, first, count)


def transport_program(measure, demand, costs=None):
    """LP over fractional assignments meeting ``demand``.

    Variables ``pi[t, i]`` (agent ``i = 1..n``) are laid out point-major. Rows
    ``0..T-1`` are the per-point capacity constraints ``sum_i pi[t, i] <= 1``
    and rows ``T + i*q + j`` are the demand equalities. The objective is the
    Monge cost ``sum w_t c_i(x_t) pi[t, i]`` (zero when ``costs`` is None), so the
    duals of the demand rows are the price matrix.
    """
    demand = check_demand(demand, measure.n_layers)
    n, q, T = demand.shape[0], measure.n_layers, measure.n_points
    cap = np.kron(np.eye(T), np.ones((1, n)))
    lw = measure.layer_weights
    rows = np.zeros((n * q, T * n))
    for i in range(n):
        rows[i * q:(i + 1) * q, i::n] = lw.T
    if costs is None:
        c = np.zeros(T * n)
    else:
        costs = check_costs(costs, measure, n)
        c = (measure.weights[None, :] * costs).T.ravel()
    return LinearProgram.from_blocks(c, ub=(cap, np.ones(T)), eq=(rows, demand.ravel()))


def plan_from_solution(x, n_points, n_agents):
    """Reshape LP variables into a ``(T, n + 1)`` fractional assignment."""
    share = np.clip(np.asarray(x).reshape(n_points, n_agents), 0.0, 1.0)
    null = np.clip(1.0 - share.sum(axis=1, keepdims=True), 0.0, 1.0)
    return np.hstack([null, share])


def achievable_relaxed(demand, measure, method="highs"):
    """LP membership test for the fractional relaxation of the achievable set.

    Returns ``(True, plan)`` with a ``(T, n + 1)`` fractional assignment, or
    ``(False, None)``.
    """
    demand = check_demand(demand, measure.n_layers)
    p = transport_program(measure, demand)
    ok, sol = feasibility(p, method=method)
    if not ok:
        return False, None
    return True, plan_from_solution(sol, measure.n_points, demand.shape[0])


def achievable_row(row, measure, method="highs"):
    """Is ``row`` the layer-mass vector of some fractional subset of the points?

    This is the single-agent projection of the achievable set: the other
    agents are free to take nothing. Returns ``(ok, shares)`` with per-point
    shares in ``[0, 1]``.
    """
    row = np.asarray(row, dtype=np.float64).ravel()
    if row.size != measure.n_layers:
        raise SizeMismatch(f"row has {row.size} entries, expected {measure.n_layers}")
    T = measure.n_points
    p = LinearProgram(np.zeros(T), measure.layer_weights.T, "==", row, 0.0, 1.0)
    ok, sol = feasibility(p, method=method)
    return (True, np.clip(sol, 0.0, 1.0)) if ok else (False, None)


def sample_achievable(measure, n_agents, seed=None, p_unsold=None):
    """Random exactly achievable demand: draw labels, return ``(demand, labels)``.

    ``p_unsold`` is the probability of label 0 (default ``1 / (n + 1)``); the
    remaining probability is split evenly across agents.
    """
    if n_agents < 1:
        raise ValueError("n_agents must be at least 1")
    rng = check_random_state(seed)
    if p_unsold is None:
        p_unsold = 1.0 / (n_agents + 1)
    probs = np.concatenate([[p_unsold], np.full(n_agents, (1.0 - p_unsold) / n_agents)])
    labels = rng.choice(n_agents + 1, size=measure.n_points, p=probs)
    return demand_of(measure, labels, n_agents), labels
