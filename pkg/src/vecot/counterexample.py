"""A demand with a unique sub-partition but no equilibrium price.

The construction places ``q + 1`` atoms with one shared density row on the
hyperplane where two agents ``i`` and ``k`` earn the same income at the base
prices ``P0``. Any price matrix acts on those atoms through the single scalar
``s = (p_i - p_k) . zeta``: agent ``i`` beats ``k`` on atom ``l`` exactly when
``s > w_l``, where ``w_l = c_i(x_l) - c_k(x_l)``. A target that hands ``i`` an
atom with a large ``w`` while leaving ``k`` one with a smaller ``w`` is not a
threshold split, so no price serves it.

Atom weights are powers of two, so their subset sums differ and no other
labelling reproduces the target demand.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_random_state
from .dual_solver import SolverConfig, solve_dual
from .exceptions import DegenerateSpan
from .measure import build_measure
from .partition import ENUMERATION_GUARD, achievable_exact, demand_of
from .pricing import is_equilibrium

#: Offset of the two interior points that hug the boundary hyperplane.
BOUNDARY_OFFSET = 1e-5


@dataclass
class WitnessInstance:
    """A built witness and the data of its construction.

    Attributes
    ----------
    measure : LayeredMeasure
    prices : ndarray of shape (n, q)
        Base prices ``P0`` with pairwise distinct rows.
    boundary : ndarray of int
        Indices of the ``q + 1`` boundary atoms (empty for a boundary-free instance).
    costs : ndarray of shape (n, T)
    target : ndarray of shape (n, q)
    w : ndarray of shape (q + 1,)
        Cost differences ``c_i - c_k`` on the atoms.
    pair : tuple of int
        The designated agents ``(i, k)``, 1-based.
    labels : ndarray of shape (T,)
        The designated assignment; ``target`` is its demand.
    """

    measure: object
    prices: np.ndarray
    boundary: np.ndarray
    costs: np.ndarray
    target: np.ndarray
    w: np.ndarray
    pair: tuple
    labels: np.ndarray
    boundary_offset: float = BOUNDARY_OFFSET
    boundary_weight_scale: float = 0.1

    @property
    def atom_masses(self):
        return self.measure.weights[self.boundary]

    @property
    def split(self):
        """Designated labels on the boundary atoms."""
        return self.labels[self.boundary]

    def witness_block(self):
        """JSON-ready description of the construction."""
        return {
            "boundary": [int(b) for b in self.boundary],
            "w": [float(v) for v in self.w],
            "pair": [int(a) for a in self.pair],
            "split": [int(a) for a in self.split],
            "base_prices": self.prices.tolist(),
        }

    def with_costs(self, costs):
        """Same measure and target under another cost field."""
        costs = np.zeros_like(self.costs) if costs is None else np.asarray(costs, dtype=np.float64)
        return WitnessInstance(self.measure, self.prices, self.boundary, costs, self.target, self.w,
                               self.pair, self.labels, self.boundary_offset,
                               self.boundary_weight_scale)


def span_residual(w, zeta):
    """Distance from ``w`` to ``V = {(t . zeta_l)_l : t in R^q}``.

    ``zeta`` stacks the atoms' density rows, so ``V`` is its column space.
    """
    coef = np.linalg.lstsq(zeta, w, rcond=None)[0]
    return float(np.linalg.norm(w - zeta @ coef))


def _subset_sums_distinct(weights):
    k = len(weights)
    masks = (np.arange(2**k)[:, None] >> np.arange(k)) & 1
    sums = np.round(masks @ np.asarray(weights, dtype=np.float64), 12)
    return np.unique(sums).size == sums.size


def build_witness(q=2, n=2, interior_points_per_agent=3, boundary_weight_scale=0.1, seed=0,
                  pair=(1, 2), w=None, split=None, boundary_weights=None,
                  boundary_offset=BOUNDARY_OFFSET):
    """Construct a witness instance.

    Parameters
    ----------
    q, n : int
        Layers and agents; ``2 <= n <= q`` so that ``P0`` can take the unit
        rows ``e_1 .. e_n``.
    interior_points_per_agent : int
        Points drawn well inside each agent's zero-cost region at ``P0``.
    boundary_weight_scale : float
        Atom weights are ``scale * (1, 2, 4, ..., 2^q)``. Zero drops the atoms.
    seed : int or None
        Drives point coordinates, interior densities and weights.
    pair : tuple of int
        Designated agents ``(i, k)``.
    w : array-like of shape (q + 1,), optional
        Cost differences on the atoms. Default ``(0, 1, ..., q)``.
    split : array-like of shape (q + 1,), optional
        Designated owner (``i`` or ``k``) of each atom. Default: the first
        and last atom to ``i``, the rest to ``k``, which is not a threshold
        split for increasing ``w``.
    boundary_weights : array-like of shape (q + 1,), optional
        Override the power-of-two atom weights (distinct subset sums are then
        not enforced, so uniqueness may fail).
    boundary_offset : float
        Two heavy interior points sit at ``zeta_b +- offset (e_i - e_k)``.
        They stay strictly inside their regions but force any price that
        splits the atoms fractionally to have norm of order ``1 / offset``.

    Returns
    -------
    WitnessInstance

    Raises
    ------
    DegenerateSpan
        ``w`` lies in ``V``, so the cost can be absorbed by prices.
    """
    if q < 2 or n < 2:
        raise ValueError("the witness needs q >= 2 and n >= 2")
    if n > q:
        raise ValueError("the builder supports n <= q (unit-row base prices)")
    i, k = pair
    if not (1 <= i <= n and 1 <= k <= n and i != k):
        raise ValueError(f"pair must name two distinct agents in 1..{n}")
    rng = check_random_state(seed)
    eye = np.eye(q)
    P0 = eye[:n].copy()

    dens, wts, labels = [], [], []
    for a in range(1, n + 1):
        lam = rng.uniform(0.05, 0.45, size=interior_points_per_agent)
        mix = rng.dirichlet(np.ones(q), size=interior_points_per_agent)
        dens.append((1 - lam)[:, None] * eye[a - 1] + lam[:, None] * mix)
        wts.append(rng.uniform(0.5, 1.5, size=interior_points_per_agent))
        labels += [a] * interior_points_per_agent
    zeta_b = 0.5 * (eye[i - 1] + eye[k - 1])
    shift = boundary_offset * (eye[i - 1] - eye[k - 1])
    dens.append(np.vstack([zeta_b + shift, zeta_b - shift]))
    wts.append(np.ones(2))
    labels += [i, k]

    n_atoms = q + 1 if boundary_weight_scale > 0 else 0
    w = np.arange(q + 1, dtype=np.float64) if w is None else np.asarray(w, dtype=np.float64)
    if w.shape != (q + 1,):
        raise ValueError(f"w must have length q + 1 = {q + 1}")
    if split is None:
        split = [k] * (q + 1)
        split[0] = split[-1] = i
    split = np.asarray(split, dtype=np.intp)
    if split.shape != (q + 1,) or not np.all(np.isin(split, (i, k))):
        raise ValueError("split must give each atom to one of the designated pair")
    if n_atoms:
        if boundary_weights is None:
            atom_w = boundary_weight_scale * 2.0 ** np.arange(q + 1)
        else:
            atom_w = np.asarray(boundary_weights, dtype=np.float64)
        dens.append(np.tile(zeta_b, (q + 1, 1)))
        wts.append(atom_w)
        labels += split.tolist()
        if span_residual(w, np.tile(zeta_b, (q + 1, 1))) <= 1e-6 * np.linalg.norm(w):
            raise DegenerateSpan("w lies in the span V and can be priced away")

    densities = np.vstack(dens)
    T = densities.shape[0]
    points = rng.random((T, 2))
    measure = build_measure(points, np.concatenate(wts), densities)
    labels = np.asarray(labels, dtype=np.intp)
    boundary = np.arange(T - n_atoms, T)
    costs = np.zeros((n, T))
    if n_atoms:
        costs[i - 1, boundary] = w
    target = demand_of(measure, labels, n)
    return WitnessInstance(measure, P0, boundary, costs, target, w, (i, k), labels,
                           boundary_offset, boundary_weight_scale)


def check_witness(wit):
    """Structural invariants of a witness; returns a dict of booleans."""
    i, k = wit.pair
    P = wit.prices
    Zb = wit.measure.densities[wit.boundary]
    rows_distinct = np.unique(P, axis=0).shape[0] == P.shape[0]
    on_hyperplane = bool(np.all(Zb @ (P[i - 1] - P[k - 1]) == 0.0))
    out = {"rows_distinct": bool(rows_distinct), "on_hyperplane": on_hyperplane}
    out["subset_sums_distinct"] = _subset_sums_distinct(wit.atom_masses)
    out["w_outside_span"] = bool(len(wit.boundary) == 0 or
                                 span_residual(wit.w, Zb) > 1e-6 * np.linalg.norm(wit.w))
    return out


def verify_uniqueness(wit, guard=ENUMERATION_GUARD):
    """Brute-force count of integral sub-partitions meeting the target.

    Returns
    -------
    unique : bool
    count : int
    """
    result = achievable_exact(wit.target, wit.measure, guard=guard)
    return result.count == 1, result.count


def threshold_interval(wit):
    """Scalar window forced on ``s = (p_i - p_k) . zeta_b`` by the atom split.

    Returns ``(lower, upper)``: ``s`` must be at least the largest ``w`` among
    atoms owned by ``i`` and at most the smallest among those owned by ``k``.
    The split is servable only if ``lower <= upper``.
    """
    i, k = wit.pair
    split = wit.split
    w = wit.w[: len(split)]
    lower = float(w[split == i].max(initial=-np.inf))
    upper = float(w[split == k].min(initial=np.inf))
    return lower, upper


@dataclass
class NoEquilibriumEvidence:
    """Evidence that a witness has no equilibrium price.

    ``verdict`` rests on the threshold argument alone; the grid search and
    the solver run corroborate it.
    """

    threshold: tuple
    grid_points: int = 0
    grid_equilibria: int = None
    solver: object = field(default=None, repr=False)
    solver_status: str = None
    residual_floor: float = None
    smallest_atom_mass: float = None

    @property
    def threshold_empty(self):
        return self.threshold[0] > self.threshold[1]

    @property
    def verdict(self):
        return "no equilibrium" if self.threshold_empty else "equilibrium possible"

    @property
    def floor_ok(self):
        if self.residual_floor is None:
            return None
        return self.residual_floor >= 0.5 * self.smallest_atom_mass

    @property
    def corroborated(self):
        """Grid and solver agree with the threshold verdict (where run)."""
        checks = []
        if self.grid_equilibria is not None:
            checks.append((self.grid_equilibria == 0) == self.threshold_empty)
        if self.solver_status is not None:
            expect = "diverged" if self.threshold_empty else "converged"
            checks.append(self.solver_status == expect)
        return all(checks)

    def to_dict(self):
        return {
            "threshold": list(self.threshold),
            "threshold_empty": self.threshold_empty,
            "grid_points": self.grid_points,
            "grid_equilibria": self.grid_equilibria,
            "solver_status": self.solver_status,
            "residual_floor": self.residual_floor,
            "smallest_atom_mass": self.smallest_atom_mass,
            "verdict": self.verdict,
        }


def grid_search(wit, low=-10.0, high=10.0, num=41, tol=1e-9, tie_tol=1e-9, chunk=1 << 14):
    """Count equilibria among price matrices on a regular grid.

    Every entry of ``P`` ranges over ``linspace(low, high, num)``. A vectorised
    bound screens each grid point: per agent and layer, the demand must lie
    between the mass of points it wins outright and that plus the mass of
    points it ties on. Survivors go through :func:`is_equilibrium` with tie
    search.

    Returns
    -------
    count : int
    total : int
        Number of grid points examined.
    """
    m, costs, target = wit.measure, wit.costs, wit.target
    n, q = target.shape
    axis = np.linspace(low, high, num)
    total = num ** (n * q)
    Z, lw = m.densities, m.layer_weights
    count = 0
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        digits = (idx[:, None] // num ** np.arange(n * q - 1, -1, -1)) % num
        P = axis[digits].reshape(-1, n, q)
        u = np.einsum("tj,gij->gti", Z, P) - costs.T[None]
        u = np.concatenate([np.zeros(u.shape[:2] + (1,)), u], axis=2)
        best = u.max(axis=2, keepdims=True)
        tied = u >= best - tie_tol
        single = tied & (tied.sum(axis=2, keepdims=True) == 1)
        lo = np.einsum("gti,tj->gij", single[:, :, 1:].astype(float), lw)
        hi = np.einsum("gti,tj->gij", tied[:, :, 1:].astype(float), lw)
        ok = np.all((lo <= target + tol) & (target <= hi + tol), axis=(1, 2))
        for g in np.flatnonzero(ok):
            if is_equilibrium(m, costs, P[g], target, tol=tol, tie_tol=tie_tol):
                count += 1
    return count, total


def verify_no_equilibrium(wit, grid=(-10.0, 10.0, 41), solver_config=None, run_grid=True,
                          run_solver=True):
    """Collect the three pieces of non-existence evidence.

    Parameters
    ----------
    wit : WitnessInstance
    grid : tuple (low, high, num) or None
    solver_config : SolverConfig, optional
        The ascent starts from the base prices ``P0``. At ``P = 0`` every
        interior income ties at zero, which lets split assignments come
        within ``1e-5`` of the target and would mask the residual floor.
    run_grid, run_solver : bool
        Skip the expensive corroborations.

    Returns
    -------
    NoEquilibriumEvidence
    """
    ev = NoEquilibriumEvidence(threshold=threshold_interval(wit))
    masses = wit.atom_masses
    ev.smallest_atom_mass = float(masses.min()) if masses.size else 0.0
    if run_grid and grid is not None:
        ev.grid_equilibria, ev.grid_points = grid_search(wit, *grid)
    if run_solver:
        cfg = solver_config or SolverConfig()
        report = solve_dual(wit.measure, wit.costs, wit.target, cfg, initial_prices=wit.prices)
        ev.solver = report
        ev.solver_status = report.status.value
        ev.residual_floor = report.residual_floor(cfg.divergence_window)
    return ev


@dataclass
class RefinementRow:
    level: int
    boundary_weight_scale: float
    boundary_offset: float
    status: str
    best_residual_in_cap: float
    norm_at_residual: float
    iterations: int

    def to_dict(self):
        return dict(self.__dict__)


def refinement_study(levels=3, factor=4.0, residual=1e-6, norm_cap=1e4, include_boundary_free=True,
                     max_iter=5000, **witness_kwargs):
    """Shrink the boundary atoms and the boundary offset together.

    Level ``l`` scales both the atom weights and the offset of the
    boundary-hugging points by ``factor ** -l``, which mimics sampling the
    regions next to the boundary more finely. Each level runs the ascent from
    ``P0`` with no divergence stop and records the best residual seen while
    the price norm stays within ``norm_cap`` and the price norm at the first
    iterate whose residual reaches ``residual``. A last row with the atoms
    removed is added when ``include_boundary_free``.

    Returns
    -------
    list of RefinementRow
    """
    scale = witness_kwargs.pop("boundary_weight_scale", 0.1)
    offset = witness_kwargs.pop("boundary_offset", BOUNDARY_OFFSET)
    specs = [(lvl, scale / factor**lvl, offset / factor**lvl) for lvl in range(levels)]
    if include_boundary_free:
        specs.append((levels, 0.0, offset / factor ** (levels - 1)))
    rows = []
    for lvl, s, off in specs:
        wit = build_witness(boundary_weight_scale=s, boundary_offset=off, **witness_kwargs)
        cfg = SolverConfig(max_iter=max_iter, divergence_threshold=np.inf, tol=residual)
        rep = solve_dual(wit.measure, wit.costs, wit.target, cfg, initial_prices=wit.prices)
        hist = rep.history
        inside = hist[hist[:, 2] <= norm_cap, 1] if len(hist) else np.empty(0)
        best = float(inside.min()) if inside.size else np.inf
        if rep.converged and rep.price_norm <= norm_cap:
            best = min(best, rep.residual_norm)
        hit = np.flatnonzero(hist[:, 1] <= residual) if len(hist) else np.empty(0, dtype=int)
        if hit.size:
            norm = float(hist[hit[0], 2])
        elif rep.converged:
            norm = rep.price_norm
        else:
            norm = np.inf
        rows.append(RefinementRow(lvl, s, off, rep.status.value, best, norm, rep.iterations))
    return rows
