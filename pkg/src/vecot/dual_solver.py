"""Supergradient ascent on the dual functional.

The dual ``D(P) = <P, M> - sum_t w_t phi_t(P)`` is concave and piecewise
linear. :func:`solve_dual` climbs it with diminishing or Polyak steps and
stops when ``M`` lies (to tolerance) in the demand set induced by the current
prices, tied points being allowed to split. Price blow-up with a residual that
refuses to shrink is reported as divergence: evidence, not proof, that the
supremum is not attained.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_costs, check_demand, check_random_state
from .exceptions import FractionalOnly, InfeasibleDemand, NumericalBreakdown
from .lp import LinearProgram, LpStatus, solve_lp
from .partition import (
    _enumerate_matches,
    demand_of,
    feasible_necessary,
    monge_cost,
    plan_from_solution,
    transport_program,
)
from .pricing import completion_residual

STEP_RULES = ("diminishing", "polyak")


class SolverStatus(enum.Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    ITERATION_CAP = "iteration_cap"


@dataclass
class SolverConfig:
    """Knobs for :func:`solve_dual`.

    ``step="polyak"`` needs ``target_value``, an upper estimate of the dual
    supremum (the LP optimum from :func:`lp_dual_value` is exact). ``report``
    picks the prices returned when the run does not converge: ``"best"``
    (highest objective) or ``"last"``.

    Every ``polish_every`` iterations (0 disables) the solver tries to close
    the run: for each slack in ``polish_levels`` (scaled by the cost range) it
    splits the near-tied points to meet the demand with the least income loss,
    makes the ties it used exact by a least-norm price correction, and jumps
    there if the corrected prices pass the convergence test.
    """

    max_iter: int = 50_000
    tol: float = 1e-6
    divergence_threshold: float = 1e4
    divergence_window: int = 1000
    step: str = "diminishing"
    step_scale: float = 1.0
    target_value: float = None
    report: str = "best"
    seed: int = None
    init_scale: float = 1.0
    tie_tol: float = 1e-6
    polish_every: int = 20
    polish_levels: tuple = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)

    def __post_init__(self):
        if self.tol <= 0 or self.divergence_threshold <= 0 or self.tie_tol < 0:
            raise ValueError("tolerances must be positive")
        if self.polish_every < 0:
            raise ValueError("polish_every must be non-negative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.step not in STEP_RULES:
            raise ValueError(f"step must be one of {STEP_RULES}")
        if self.step == "polyak" and self.target_value is None:
            raise ValueError("the Polyak step needs target_value")
        if self.report not in ("best", "last"):
            raise ValueError("report must be 'best' or 'last'")


@dataclass
class DualReport:
    """Outcome of a dual ascent run.

    ``history`` has one row ``(objective, residual_inf, price_frobenius)`` per
    iterate that failed the convergence test, so its length equals
    ``iterations``. ``residual`` is ``M - M(P)`` at ``prices`` with tied points
    split optimally.
    """

    prices: np.ndarray
    objective: float
    residual: np.ndarray
    residual_norm: float
    price_norm: float
    iterations: int
    status: SolverStatus
    history: np.ndarray = field(repr=False)
    best_objective: float = None
    best_prices: np.ndarray = field(default=None, repr=False)
    plan: np.ndarray = field(default=None, repr=False)

    @property
    def converged(self):
        return self.status is SolverStatus.CONVERGED

    def residual_floor(self, window=1000):
        """Smallest residual over the last ``window`` recorded iterates."""
        if not len(self.history):
            return self.residual_norm
        return float(self.history[-window:, 1].min())

    def history_rows(self):
        """``(iter, objective, residual_inf, price_frobenius)`` tuples for CSV export."""
        return [(k, *map(float, row)) for k, row in enumerate(self.history)]


class _Evaluator:
    """Dual value, supergradient and tie-completion residual at a price matrix.

    The completion LP is cached on the tie structure, which repeats often
    while the iterates circle the optimum.
    """

    def __init__(self, measure, costs, target, tie_tol):
        self.measure, self.costs, self.target, self.tie_tol = measure, costs, target, tie_tol
        self.lw = measure.layer_weights
        self._key, self._cached = None, None

    def __call__(self, P):
        m, target = self.measure, self.target
        u = m.densities @ P.T - self.costs.T
        u = np.hstack([np.zeros((u.shape[0], 1)), u])
        mx = u.max(axis=1)
        f = float(np.sum(P * target) - m.weights @ mx)
        mask = u >= mx[:, None] - self.tie_tol
        labels = np.argmax(mask, axis=1)
        demand = np.zeros((P.shape[0] + 1, self.lw.shape[1]))
        np.add.at(demand, labels, self.lw)
        g = target - demand[1:]
        res = float(np.abs(g).max(initial=0.0))
        plan = None
        if res > 0 and np.any(mask.sum(axis=1) > 1):
            key = mask.tobytes()
            if key != self._key:
                sets = [np.flatnonzero(row) for row in mask]
                self._key = key
                self._cached = completion_residual(m, self.costs, P, target, self.tie_tol, sets)
            r2, split = self._cached
            if r2 < res:
                res, plan = r2, split
                g = target - split[:, 1:].T @ self.lw
        return f, g, res, labels, plan


def _restricted_split(measure, target, u, eps):
    """Split points over their ``eps``-best labels to meet ``target`` exactly.

    Among such splits, pick one losing the least income (``u`` is the income
    table). Returns ``(plan, shift)`` or None when no split meets the target.
    ``shift`` holds the duals of the demand rows: at ``P + shift`` every
    label used by ``plan`` is income-maximizing among the admitted labels.
    """
    T = measure.n_points
    n, q = target.shape
    lw = measure.layer_weights
    mx = u.max(axis=1)
    var = np.argwhere(u >= mx[:, None] - eps)
    t_idx, a_idx = var[:, 0], var[:, 1]
    nv = len(var)
    A_pt = np.zeros((T, nv))
    A_pt[t_idx, np.arange(nv)] = 1.0
    A_dem = np.zeros((n * q, nv))
    for k, (t, a) in enumerate(var):
        if a > 0:
            A_dem[(a - 1) * q:a * q, k] = lw[t]
    loss = measure.weights[t_idx] * (mx[t_idx] - u[t_idx, a_idx])
    p = LinearProgram.from_blocks(
        loss, eq=(np.vstack([A_pt, A_dem]), np.concatenate([np.ones(T), target.ravel()])))
    try:
        sol = solve_lp(p)
    except NumericalBreakdown:
        return None
    if sol.status is not LpStatus.OPTIMAL:
        return None
    plan = np.zeros((T, n + 1))
    plan[t_idx, a_idx] = np.clip(sol.x, 0.0, 1.0)
    return plan, sol.duals[T:].reshape(n, q)


def _tie_correction(measure, P, u, plan):
    """Least-norm price change equalizing incomes over each point's used labels."""
    n, q = P.shape
    Z = measure.densities
    rows, rhs = [], []
    for t in range(measure.n_points):
        used = np.flatnonzero(plan[t] > 1e-12)
        for a, b in zip(used[:-1], used[1:]):
            row = np.zeros((n, q))
            if a > 0:
                row[a - 1] += Z[t]
            if b > 0:
                row[b - 1] -= Z[t]
            rows.append(row.ravel())
            rhs.append(u[t, b] - u[t, a])
    if not rows:
        return P
    d = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0]
    return P + d.reshape(n, q)


def _polish(evaluate, P, levels, tol):
    """Try to jump from ``P`` to prices passing the convergence test.

    For growing slack ``eps`` the near-best labels are split to meet the
    demand. Two candidates are tried: the least-norm correction making the
    split's ties exact, then the split LP's own dual prices.
    """
    m, costs, target = evaluate.measure, evaluate.costs, evaluate.target
    u = np.hstack([np.zeros((m.n_points, 1)), m.densities @ P.T - costs.T])
    mx = u.max(axis=1)
    for eps in levels:
        if not np.any(np.sum(u >= mx[:, None] - eps, axis=1) > 1):
            continue
        found = _restricted_split(m, target, u, eps)
        if found is None:
            continue
        plan, shift = found
        for Q in (_tie_correction(m, P, u, plan), P + shift):
            if np.all(np.isfinite(Q)) and evaluate(Q)[2] <= tol:
                return Q
    return None


def solve_dual(measure, costs, target, config=None, initial_prices=None):
    """Maximize the dual functional by supergradient ascent.

    Parameters
    ----------
    measure : LayeredMeasure
    costs : array-like of shape (n, T) or None
    target : array-like of shape (n, q)
        Demand matrix; must satisfy the per-layer mass bound.
    config : SolverConfig, optional
    initial_prices : array-like of shape (n, q), optional
        Overrides the zero (or seeded random) start.

    Returns
    -------
    DualReport

    Raises
    ------
    InfeasibleDemand
        Column sums of ``target`` exceed the layer masses.
    """
    cfg = config or SolverConfig()
    target = check_demand(target, measure.n_layers)
    n, q = target.shape
    costs = check_costs(costs, measure, n)
    if not feasible_necessary(target, measure):
        raise InfeasibleDemand("demand exceeds the available mass of some layer")
    if initial_prices is not None:
        P = np.array(initial_prices, dtype=np.float64).reshape(n, q)
    elif cfg.seed is not None:
        P = check_random_state(cfg.seed).normal(scale=cfg.init_scale, size=(n, q))
    else:
        P = np.zeros((n, q))

    evaluate = _Evaluator(measure, costs, target, cfg.tie_tol)
    levels = tuple(e * (1.0 + float(np.abs(costs).max(initial=0.0))) for e in cfg.polish_levels)
    history = []
    best_f, best_P = -np.inf, P.copy()
    status = SolverStatus.ITERATION_CAP
    for k in range(cfg.max_iter + 1):
        f, g, res, labels, plan = evaluate(P)
        if f > best_f:
            best_f, best_P = f, P.copy()
        norm = float(np.linalg.norm(P))
        # the cap is tested first: a split equilibrium found only beyond it
        # still counts as blow-up
        if norm > cfg.divergence_threshold and history:
            recent = min(h[1] for h in history[-cfg.divergence_window:])
            if recent >= 10 * cfg.tol:
                status = SolverStatus.DIVERGED
                break
        if res <= cfg.tol:
            status = SolverStatus.CONVERGED
            break
        history.append((f, res, norm))
        if k == cfg.max_iter:
            break
        if cfg.polish_every and k % cfg.polish_every == cfg.polish_every - 1:
            Q = _polish(evaluate, P, levels, cfg.tol)
            if Q is not None:
                # the next pass applies the cap and convergence tests to Q
                P = Q
                continue
        gg = float(np.sum(g * g))
        if gg == 0.0:
            # lowest-index completion already meets the demand up to rounding
            status = SolverStatus.CONVERGED
            break
        if cfg.step == "polyak":
            alpha = cfg.step_scale * max(cfg.target_value - f, 0.0) / gg
            if alpha == 0.0:
                alpha = cfg.step_scale * cfg.tie_tol / np.sqrt(gg)
        else:
            alpha = cfg.step_scale / (k + 1)
        P = P + alpha * g

    if status is not SolverStatus.CONVERGED and cfg.report == "best":
        P = best_P
        f, g, res, labels, plan = evaluate(P)
    if plan is None:
        plan = np.zeros((measure.n_points, n + 1))
        plan[np.arange(measure.n_points), labels] = 1.0
    residual = target - plan[:, 1:].T @ measure.layer_weights
    return DualReport(
        prices=P, objective=f, residual=residual, residual_norm=res,
        price_norm=float(np.linalg.norm(P)), iterations=len(history), status=status,
        history=np.array(history, dtype=np.float64).reshape(-1, 3),
        best_objective=best_f, best_prices=best_P, plan=plan,
    )


def solve_scalar(measure, costs, target, config=None, initial_prices=None):
    """Single-layer specialization; ``target`` is a length-n vector of masses."""
    if measure.n_layers != 1:
        raise ValueError("solve_scalar needs a single-layer measure")
    target = np.asarray(target, dtype=np.float64).reshape(-1, 1)
    return solve_dual(measure, costs, target, config, initial_prices)


def lp_dual_value(measure, costs, target, method="highs"):
    """Solve the primal transport LP.

    Returns
    -------
    value : float
        Minimal Monge cost over fractional assignments meeting ``target``; by LP
        duality also the maximum of the dual functional.
    prices : ndarray of shape (n, q)
        Optimal dual prices (duals of the demand rows).
    plan : ndarray of shape (T, n + 1)
        Optimal fractional assignment.

    Raises
    ------
    InfeasibleDemand
        No fractional assignment meets ``target``.
    """
    target = check_demand(target, measure.n_layers)
    n, q = target.shape
    costs = check_costs(costs, measure, n)
    p = transport_program(measure, target, costs)
    sol = solve_lp(p, method=method)
    if sol.status is not LpStatus.OPTIMAL:
        raise InfeasibleDemand("target is not achievable even fractionally")
    T = measure.n_points
    prices = sol.duals[T:].reshape(n, q)
    return sol.objective, prices, plan_from_solution(sol.x, T, n)


def stable_partition(measure, costs, target, method="highs", tol=1e-9, max_completions=2**20):
    """Cost-minimizing sub-partition meeting ``target``.

    Solves the transport LP. An integral optimum is returned directly;
    otherwise the fractional points are completed integrally over the labels
    they use in the optimal plan, and the first completion meeting the target
    is returned if its cost matches the LP value.

    Returns
    -------
    labels : ndarray of shape (T,)
    cost : float

    Raises
    ------
    InfeasibleDemand
        The target is not even fractionally achievable.
    FractionalOnly
        No integral completion matches; carries the LP value and plan.
    """
    target = check_demand(target, measure.n_layers)
    n = target.shape[0]
    costs = check_costs(costs, measure, n)
    value, _, plan = lp_dual_value(measure, costs, target, method)
    frac = np.flatnonzero(np.abs(plan - np.round(plan)).max(axis=1) > 1e-9)
    labels = np.argmax(plan, axis=1)
    if frac.size == 0:
        return labels, monge_cost(measure, costs, labels)
    options = [np.flatnonzero(plan[t] > 1e-9) for t in frac]
    fixed = labels.copy()
    fixed[frac] = 0
    rest = target - demand_of(measure, fixed, n)
    try:
        first, _ = _enumerate_matches(options, measure.layer_weights[frac], n, rest, 1e-8,
                                      max_completions, stop_at_first=True)
    except Exception:
        first = None
    if first is not None:
        labels[frac] = first
        cost = monge_cost(measure, costs, labels)
        if abs(cost - value) <= tol * max(1.0, abs(value)):
            return labels, cost
    raise FractionalOnly(value, plan)
