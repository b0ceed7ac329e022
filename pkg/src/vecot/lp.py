"""Dense linear programming oracle.

Two backends solve the same :class:`LinearProgram`: ``"highs"`` (scipy's HiGHS,
the default) and ``"bland"``, a two-phase dense tableau simplex with Bland's
anti-cycling rule. Both return row duals with the convention
``duals[i] = d(objective) / d(b[i])``, which makes strong duality and Farkas
certificates checkable with one matrix-vector product.
"""

import enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .exceptions import NumericalBreakdown, SizeMismatch

FEAS_TOL = 1e-9
GAP_TOL = 1e-8

_SENSES = {"<=": "<=", "le": "<=", "==": "==", "=": "==", "eq": "==", ">=": ">=", "ge": ">="}


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    """``min`` (or ``max``) ``c . x`` subject to ``A x (senses) b`` and ``lower <= x <= upper``.

    ``senses`` holds one of ``"<="``, ``"=="``, ``">="`` per row. Lower bounds
    default to 0 and upper bounds to ``+inf``.
    """

    c: np.ndarray
    A: np.ndarray
    senses: np.ndarray
    b: np.ndarray
    lower: np.ndarray = None
    upper: np.ndarray = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64).ravel()
        nv = self.c.size
        self.A = np.asarray(self.A, dtype=np.float64).reshape(-1, nv)
        m = self.A.shape[0]
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        senses = [self.senses] * m if isinstance(self.senses, str) else list(self.senses)
        try:
            self.senses = np.array([_SENSES[s] for s in senses], dtype=object)
        except KeyError as exc:
            raise ValueError(f"unknown row sense {exc.args[0]!r}") from None
        self.lower = np.zeros(nv) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=np.float64), (nv,)).copy()
        self.upper = np.full(nv, np.inf) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=np.float64), (nv,)).copy()
        if self.b.size != m or self.senses.size != m:
            raise SizeMismatch(f"A has {m} rows but b has {self.b.size} and senses {self.senses.size}")
        for name in ("c", "A", "b"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be finite")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds must not be NaN")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf) or np.any(self.lower > self.upper):
            raise ValueError("inconsistent variable bounds")

    @classmethod
    def from_blocks(cls, c, *, ub=None, eq=None, ge=None, lower=None, upper=None, maximize=False):
        """Stack ``(A, b)`` blocks for each row sense into one program."""
        c = np.asarray(c, dtype=np.float64).ravel()
        rows, rhs, senses = [np.zeros((0, c.size))], [np.zeros(0)], []
        for sense, block in (("<=", ub), ("==", eq), (">=", ge)):
            if block is None:
                continue
            A, b = block
            A = np.asarray(A, dtype=np.float64).reshape(-1, c.size)
            rows.append(A)
            rhs.append(np.asarray(b, dtype=np.float64).ravel())
            senses += [sense] * A.shape[0]
        return cls(c, np.vstack(rows), senses, np.concatenate(rhs), lower, upper, maximize)

    @property
    def n_vars(self):
        return self.c.size

    @property
    def n_rows(self):
        return self.b.size

    def row_violation(self, x):
        """Per-row constraint violation (nonnegative) at ``x``."""
        r = self.A @ x - self.b
        viol = np.zeros_like(r)
        le, ge, eq = self.senses == "<=", self.senses == ">=", self.senses == "=="
        viol[le] = np.maximum(r[le], 0)
        viol[ge] = np.maximum(-r[ge], 0)
        viol[eq] = np.abs(r[eq])
        return viol

    def primal_residual(self, x):
        bound = np.maximum(self.lower - x, 0) + np.maximum(x - self.upper, 0)
        return float(max(self.row_violation(x).max(initial=0.0), bound.max(initial=0.0)))

    def dual_objective(self, y):
        """Lagrangian dual value at row multipliers ``y`` (``-inf``/``+inf`` if invalid)."""
        d = self.c - self.A.T @ y
        scale = 1.0 + np.abs(self.c).max(initial=0.0)
        d = np.where(np.abs(d) <= 1e-11 * scale, 0.0, d)
        if self.maximize:
            d = -d
        # min over the box of d . x; a term is unbounded when it leans on an infinite bound
        lo = np.where(d > 0, self.lower, np.where(d < 0, self.upper, 0.0))
        if np.any(np.isinf(lo) & (d != 0)):
            return np.inf if self.maximize else -np.inf
        box = float(np.sum(np.where(d != 0, d * lo, 0.0)))
        return float(y @ self.b) + (-box if self.maximize else box)


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray = None
    duals: np.ndarray = None
    objective: float = None
    primal_residual: float = None
    slackness_residual: float = None
    dual_objective: float = None

    @property
    def optimal(self):
        return self.status is LpStatus.OPTIMAL

    @property
    def relative_gap(self):
        if self.objective is None or self.dual_objective is None:
            return None
        return abs(self.objective - self.dual_objective) / max(1.0, abs(self.objective))


@dataclass
class FarkasCertificate:
    """Row multipliers proving ``A x (senses) b, lower <= x <= upper`` has no solution.

    Validity: ``y_i <= 0`` on ``<=`` rows, ``y_i >= 0`` on ``>=`` rows, and
    ``y . b > max over the box of (A^T y) . x``.
    """

    y: np.ndarray

    def margin(self, p):
        y = self.y
        g = p.A.T @ y
        noise = 1e-11 * (1.0 + np.abs(y).max(initial=0.0) * np.abs(p.A).max(initial=0.0))
        g = np.where(np.abs(g) <= noise, 0.0, g)
        hi = np.where(g > 0, p.upper, np.where(g < 0, p.lower, 0.0))
        if np.any(np.isinf(hi) & (g != 0)):
            return -np.inf
        return float(y @ p.b - np.sum(np.where(g != 0, g * hi, 0.0)))

    def verify(self, p, tol=FEAS_TOL):
        y = self.y
        if y.shape != (p.n_rows,):
            return False
        signs_ok = np.all(y[p.senses == "<="] <= tol) and np.all(y[p.senses == ">="] >= -tol)
        return bool(signs_ok and self.margin(p) > tol)


def _finish(p, x, y):
    obj = float(p.c @ x)
    pres = p.primal_residual(x)
    row_gap = np.abs(y * (p.A @ x - p.b))
    d = p.c - p.A.T @ y
    at = np.where(d > 0, x - p.lower, np.where(d < 0, p.upper - x, 0.0))
    if p.maximize:
        at = np.where(d < 0, x - p.lower, np.where(d > 0, p.upper - x, 0.0))
    at = np.where(np.isinf(at), 0.0, at)
    col_gap = np.abs(d) * np.abs(at)
    slack = float(max(row_gap.max(initial=0.0), col_gap.max(initial=0.0)))
    return LpSolution(LpStatus.OPTIMAL, x, y, obj, pres, slack, p.dual_objective(y))


def _solve_highs(p):
    sign = -1.0 if p.maximize else 1.0
    le, ge, eq = p.senses == "<=", p.senses == ">=", p.senses == "=="
    A_ub = np.vstack([p.A[le], -p.A[ge]])
    b_ub = np.concatenate([p.b[le], -p.b[ge]])
    bounds = [(None if np.isinf(lo) else lo, None if np.isinf(hi) else hi)
              for lo, hi in zip(p.lower, p.upper)]
    res = linprog(
        sign * p.c,
        A_ub=A_ub if A_ub.shape[0] else None, b_ub=b_ub if A_ub.shape[0] else None,
        A_eq=p.A[eq] if eq.any() else None, b_eq=p.b[eq] if eq.any() else None,
        bounds=bounds, method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status == 2:
        return LpSolution(LpStatus.INFEASIBLE)
    if res.status == 3:
        return LpSolution(LpStatus.UNBOUNDED)
    if res.status != 0:
        raise NumericalBreakdown(f"HiGHS failed: {res.message}")
    y = np.zeros(p.n_rows)
    n_le = int(le.sum())
    if A_ub.shape[0]:
        y[le] = res.ineqlin.marginals[:n_le]
        y[ge] = -res.ineqlin.marginals[n_le:]
    if eq.any():
        y[eq] = res.eqlin.marginals
    return _finish(p, np.asarray(res.x, dtype=np.float64), sign * y)


# ---------------------------------------------------------------------------
# Bland simplex


def _to_standard(p):
    """Rewrite ``p`` as ``min c' z, A' z = b', z >= 0, b' >= 0``.

    Returns the standard-form arrays plus the maps needed to recover ``x`` and
    the user-row duals: ``x = x0 + S z[:n_struct]`` and
    ``dual_user = flip[:m] * y_std[:m]``.
    """
    n = p.n_vars
    cols, x0 = [], np.zeros(n)
    upper_rows = []
    for j in range(n):
        lo, hi = p.lower[j], p.upper[j]
        if np.isfinite(lo):
            x0[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                upper_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            x0[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ns = len(cols)
    S = np.zeros((n, ns))
    for k, (j, s) in enumerate(cols):
        S[j, k] = s
    c_s = S.T @ (-p.c if p.maximize else p.c)

    m_user = p.n_rows
    A_s = p.A @ S
    b_s = p.b - p.A @ x0
    senses = list(p.senses)
    if upper_rows:
        U = np.zeros((len(upper_rows), ns))
        for r, (k, cap) in enumerate(upper_rows):
            U[r, k] = 1.0
        A_s = np.vstack([A_s, U])
        b_s = np.concatenate([b_s, [cap for _, cap in upper_rows]])
        senses += ["<="] * len(upper_rows)

    m = A_s.shape[0]
    n_slack = sum(s != "==" for s in senses)
    A_std = np.zeros((m, ns + n_slack))
    A_std[:, :ns] = A_s
    slack_of_row = np.full(m, -1)
    k = ns
    for i, s in enumerate(senses):
        if s == "<=":
            A_std[i, k] = 1.0
        elif s == ">=":
            A_std[i, k] = -1.0
        else:
            continue
        slack_of_row[i] = k
        k += 1
    flip = np.where(b_s < 0, -1.0, 1.0)
    A_std *= flip[:, None]
    b_std = b_s * flip
    c_std = np.concatenate([c_s, np.zeros(n_slack)])
    return A_std, b_std, c_std, slack_of_row, flip, S, x0, m_user, ns


class _Tableau:
    def __init__(self, A, b, basis):
        m, n = A.shape
        self.T = np.zeros((m, n + 1))
        self.T[:, :n] = A
        self.T[:, n] = b
        self.basis = list(basis)
        self.pivots = 0

    def pivot(self, r, k):
        T = self.T
        T[r] /= T[r, k]
        col = T[:, k].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = k
        self.pivots += 1

    def run(self, cost, allowed, tol, max_pivots):
        """Bland iterations for ``min cost . z``; returns "optimal" or "unbounded"."""
        T = self.T
        n = T.shape[1] - 1
        while True:
            cb = cost[self.basis]
            reduced = cost[:n] - cb @ T[:, :n]
            scale = 1.0 + np.abs(cost).max(initial=0.0)
            candidates = np.flatnonzero((reduced < -tol * scale) & allowed)
            if candidates.size == 0:
                return "optimal"
            k = int(candidates[0])
            colk = T[:, k]
            rows = np.flatnonzero(colk > tol)
            if rows.size == 0:
                return "unbounded"
            ratios = T[rows, n] / colk[rows]
            best = ratios.min()
            tied = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
            r = int(min(tied, key=lambda i: self.basis[i]))
            self.pivot(r, k)
            if self.pivots > max_pivots:
                raise NumericalBreakdown("Bland simplex exceeded its pivot budget")


def _solve_bland(p, tol=1e-10):
    A, b, c, slack_of_row, flip, S, x0, m_user, ns = _to_standard(p)
    m, n = A.shape
    basis, art_rows = [], []
    for i in range(m):
        k = slack_of_row[i]
        if k >= 0 and A[i, k] > 0:
            basis.append(int(k))
        else:
            art_rows.append(i)
            basis.append(-1)
    n_art = len(art_rows)
    A1 = np.hstack([A, np.zeros((m, n_art))])
    for a, i in enumerate(art_rows):
        A1[i, n + a] = 1.0
        basis[i] = n + a
    tab = _Tableau(A1, b, basis)
    max_pivots = 50 * (m + n + n_art) + 1000

    if n_art:
        cost1 = np.concatenate([np.zeros(n), np.ones(n_art)])
        tab.run(cost1, np.ones(n + n_art, dtype=bool), tol, max_pivots)
        if tab.T[:, -1] @ cost1[tab.basis] > FEAS_TOL * (1.0 + np.abs(b).max(initial=0.0)):
            return LpSolution(LpStatus.INFEASIBLE)
        # drive artificials out of the basis; rows where that is impossible are redundant
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if tab.basis[r] >= n:
                nz = np.flatnonzero(np.abs(tab.T[r, :n]) > 1e-9)
                if nz.size:
                    tab.pivot(r, int(nz[0]))
                else:
                    keep[r] = False
        tab.T = np.hstack([tab.T[keep][:, :n], tab.T[keep][:, -1:]])
        tab.basis = [bv for bv, kp in zip(tab.basis, keep) if kp]
        rows_kept = np.flatnonzero(keep)
    else:
        rows_kept = np.arange(m)

    status = tab.run(c, np.ones(n, dtype=bool), tol, max_pivots)
    if status == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED)

    B = A[np.ix_(rows_kept, tab.basis)]
    try:
        zb = np.linalg.solve(B, b[rows_kept])
        yk = np.linalg.solve(B.T, c[tab.basis])
    except np.linalg.LinAlgError as exc:
        raise NumericalBreakdown("singular final basis") from exc
    z = np.zeros(n)
    z[tab.basis] = zb
    z = np.maximum(z, 0.0)
    y_std = np.zeros(m)
    y_std[rows_kept] = yk
    x = x0 + S @ z[:ns]
    y = flip[:m_user] * y_std[:m_user]
    if p.maximize:
        y = -y
    return _finish(p, x, y)


def solve_lp(p, method="highs"):
    """Solve ``p`` and return an :class:`LpSolution`.

    When optimal, the solution carries primal values, row duals, the primal
    feasibility residual and the complementary slackness residual.

    Raises
    ------
    NumericalBreakdown
        The backend failed or its answer is not feasible to ``1e-9`` (relative
        to the size of ``b``); the instance needs rescaling.
    """
    if method == "highs":
        sol = _solve_highs(p)
        if sol.status is LpStatus.INFEASIBLE and p.n_rows:
            # HiGHS presolve may say "infeasible" for an unbounded model; phase one decides
            e = _solve_highs(elastic_program(p))
            if e.optimal and e.objective <= FEAS_TOL * (1.0 + np.abs(p.b).max(initial=0.0)):
                sol = LpSolution(LpStatus.UNBOUNDED)
    elif method == "bland":
        sol = _solve_bland(p)
    else:
        raise ValueError(f"unknown LP method {method!r}")
    if sol.optimal:
        scale = 1.0 + np.abs(p.b).max(initial=0.0)
        if sol.primal_residual > FEAS_TOL * scale:
            raise NumericalBreakdown(f"primal residual {sol.primal_residual:.3g} exceeds tolerance")
    return sol


def elastic_program(p):
    """Phase-one program: minimize total violation of ``p``'s rows, bounds kept hard."""
    m, n = p.n_rows, p.n_vars
    A = np.hstack([p.A, np.eye(m), -np.eye(m)])
    c = np.concatenate([np.zeros(n), np.ones(2 * m)])
    lower = np.concatenate([p.lower, np.zeros(2 * m)])
    upper = np.concatenate([p.upper, np.full(2 * m, np.inf)])
    return LinearProgram(c, A, p.senses, p.b, lower, upper)


def feasibility(p, method="highs", tol=FEAS_TOL):
    """Phase-one feasibility test.

    Returns
    -------
    feasible : bool
    witness : ndarray or FarkasCertificate
        A feasible point when feasible, otherwise a certificate whose
        :meth:`FarkasCertificate.verify` checks infeasibility directly.
    """
    if p.n_rows == 0:
        if np.any(np.isinf(p.lower) & np.isinf(p.upper)):
            x = np.where(np.isfinite(p.lower), p.lower, np.where(np.isfinite(p.upper), p.upper, 0.0))
        else:
            x = np.where(np.isfinite(p.lower), p.lower, p.upper)
        return True, x
    e = elastic_program(p)
    sol = solve_lp(e, method=method)
    if not sol.optimal:
        raise NumericalBreakdown(f"phase-one program ended {sol.status.value}")
    scale = 1.0 + np.abs(p.b).max(initial=0.0)
    if sol.objective <= tol * scale:
        return True, sol.x[: p.n_vars]
    return False, FarkasCertificate(sol.duals)
