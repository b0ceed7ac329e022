"""Partial orders between layered measures and the layered Kantorovich problem.

``X`` dominates ``Y`` at level ``n`` when every demand matrix achievable by an
``n``-agent sub-partition of ``Y`` is achievable in ``X``. Over all ``n`` this
is equivalent to a row-stochastic kernel ``K`` carrying the layers of ``X``
onto those of ``Y``, and to the inequality
``sum_t w_t f(zeta_X(t)) >= sum_s w_s f(zeta_Y(s))`` for every non-negative
convex ``f``. The kernel test is a finite LP and is the authoritative verdict;
the other two are kept as independent evidence.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_matrix, check_random_state
from .exceptions import InfeasiblePlan, SizeMismatch, ZeroMassTarget
from .lp import FarkasCertificate, LinearProgram, LpStatus, feasibility, solve_lp
from .measure import build_measure, total_mass
from .partition import achievable_relaxed, demand_of

EXHAUSTIVE_GUARD = 4096
CRITERION_TOL = 1e-9


def _same_layers(mx, my):
    if mx.n_layers != my.n_layers:
        raise SizeMismatch(f"layer counts differ: {mx.n_layers} vs {my.n_layers}")


def kernel_program(mx, my):
    """Feasibility LP for a kernel from ``mx`` to ``my``.

    Variables ``K[t, s]`` are row-major. Rows ``0..T_X-1`` fix the row sums
    to one; row ``T_X + s*q + j`` requires layer ``j`` of the mass sent to
    target point ``s`` to equal ``w_s zeta_Y[s, j]``.
    """
    _same_layers(mx, my)
    tx, ty, q = mx.n_points, my.n_points, mx.n_layers
    rows = np.kron(np.eye(tx), np.ones((1, ty)))
    lw = mx.layer_weights
    push = np.zeros((ty * q, tx * ty))
    for s in range(ty):
        push[s * q:(s + 1) * q, s::ty] = lw.T
    A = np.vstack([rows, push])
    b = np.concatenate([np.ones(tx), my.layer_weights.ravel()])
    return LinearProgram(np.zeros(tx * ty), A, "==", b)


def kernel_exists(mx, my, method="highs"):
    """Decide whether a row-stochastic kernel pushes ``mx`` onto ``my``.

    Returns
    -------
    exists : bool
    evidence : ndarray of shape (T_X, T_Y) or FarkasCertificate
        The kernel, or a certificate that :meth:`FarkasCertificate.verify`
        accepts against :func:`kernel_program`.
    """
    p = kernel_program(mx, my)
    ok, ev = feasibility(p, method=method)
    if not ok:
        return False, ev
    K = np.clip(ev.reshape(mx.n_points, my.n_points), 0.0, None)
    return True, K / K.sum(axis=1, keepdims=True)


def dominates(mx, my, method="highs"):
    """The order over all ``n``, decided by the kernel LP."""
    return kernel_exists(mx, my, method)[0]


def random_kernel(n_rows, n_cols, seed=None, concentration=1.0):
    """Row-stochastic matrix with Dirichlet rows."""
    rng = check_random_state(seed)
    return rng.dirichlet(np.full(n_cols, concentration), size=n_rows)


def kernel_pushforward(mx, K, target_points):
    """Measure on ``target_points`` obtained by moving ``mx`` through ``K``.

    Target point ``s`` receives layer masses ``sum_t K[t, s] w_t zeta[t]``;
    its weight is their sum and its density row their normalization. Points
    receiving no mass are dropped with a :class:`ZeroMassTarget` warning.

    Returns
    -------
    LayeredMeasure
    """
    K = check_matrix(K, "kernel", shape=(mx.n_points, None))
    if np.any(K < 0) or np.any(np.abs(K.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("kernel must be non-negative with unit row sums")
    pts = np.asarray(target_points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[0] != K.shape[1]:
        raise SizeMismatch(f"{pts.shape[0]} target points for {K.shape[1]} kernel columns")
    mass = K.T @ mx.layer_weights
    weights = mass.sum(axis=1)
    keep = weights > 0
    if not np.all(keep):
        warnings.warn(f"dropping {int((~keep).sum())} target points with zero mass", ZeroMassTarget,
                      stacklevel=2)
    return build_measure(pts[keep], weights[keep], mass[keep] / weights[keep, None])


# ---------------------------------------------------------------------------
# convex test functions


@dataclass
class ConvexTestFamily:
    """Finite list of non-negative convex functions on the simplex.

    Each member is ``(name, f)`` with ``f`` mapping a ``(T, q)`` array of
    density rows to ``T`` values.
    """

    members: list = field(default_factory=list)

    def add_affine_max(self, name, slopes, intercepts=None):
        """Add ``z -> max(0, max_k slopes[k] . z + intercepts[k])``."""
        slopes = np.atleast_2d(np.asarray(slopes, dtype=np.float64))
        b = np.zeros(slopes.shape[0]) if intercepts is None else np.asarray(intercepts, float)
        self.members.append((name, lambda Z: np.maximum((Z @ slopes.T + b).max(axis=1), 0.0)))
        return self

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    @property
    def names(self):
        return [name for name, _ in self.members]

    @classmethod
    def builtin(cls, q, n_random=8, pieces=3, seed=0):
        """Coordinates, coordinate maximum, l1/l2/linf norms and random affine maxima."""
        fam = cls()
        for j in range(q):
            fam.add_affine_max(f"coord[{j}]", np.eye(q)[j])
        fam.members.append(("coord_max", lambda Z: Z.max(axis=1)))
        fam.members.append(("l1", lambda Z: np.abs(Z).sum(axis=1)))
        fam.members.append(("l2", lambda Z: np.linalg.norm(Z, axis=1)))
        fam.members.append(("linf", lambda Z: np.abs(Z).max(axis=1)))
        rng = check_random_state(seed)
        for r in range(n_random):
            fam.add_affine_max(f"affine_max[{r}]", rng.uniform(-1.0, 1.0, size=(pieces, q)),
                               rng.uniform(-0.5, 0.5, size=pieces))
        return fam


def convex_integral(measure, f):
    """``sum_t w_t f(zeta_t)``."""
    return float(measure.weights @ f(measure.densities))


def convex_criterion(mx, my, family=None, tol=CRITERION_TOL):
    """Check the convex-function inequality for every member of ``family``.

    Returns
    -------
    holds : bool
    failing : str or None
        Name of the first violated member.
    """
    _same_layers(mx, my)
    if family is None:
        family = ConvexTestFamily.builtin(mx.n_layers)
    for name, f in family:
        if convex_integral(mx, f) < convex_integral(my, f) - tol:
            return False, name
    return True, None


# ---------------------------------------------------------------------------
# sub-partition sampling


@dataclass
class DominanceResult:
    """Outcome of :func:`dominates_n`.

    ``holds`` is sampling evidence unless ``exhaustive`` is true, in which
    case every integral sub-partition of ``Y`` was tried. ``witness`` is a
    demand achievable in ``Y`` but not in ``X``.
    """

    holds: bool
    witness: np.ndarray = None
    witness_labels: np.ndarray = None
    tested: int = 0
    exhaustive: bool = False

    @property
    def verdict(self):
        return "holds" if self.holds else "fails"


def _label_batches(ty, n, trials, rng, guard):
    """Single-agent full assignments, then all or ``trials`` random labelings."""
    for a in range(1, n + 1):
        yield np.full(ty, a)
    if (n + 1) ** ty <= guard:
        idx = np.arange((n + 1) ** ty)
        for row in (idx[:, None] // (n + 1) ** np.arange(ty)) % (n + 1):
            yield row
    else:
        for _ in range(trials):
            yield rng.integers(0, n + 1, size=ty)


def dominates_n(mx, my, n, trials=100, seed=None, exhaustive_guard=EXHAUSTIVE_GUARD,
                method="highs"):
    """Search for a demand achievable in ``my`` but not (even fractionally) in ``mx``.

    The single-agent full assignments of ``Y`` are always tried first, so
    a layer-mass deficit of ``X`` is found at once. Then every labeling is
    tried when ``(n + 1)^T_Y <= exhaustive_guard``, else ``trials`` random
    ones. Repeated demands are tested once.

    Returns
    -------
    DominanceResult
    """
    _same_layers(mx, my)
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = check_random_state(seed)
    exhaustive = (n + 1) ** my.n_points <= exhaustive_guard
    seen = set()
    tested = 0
    for labels in _label_batches(my.n_points, n, trials, rng, exhaustive_guard):
        demand = demand_of(my, labels, n)
        key = np.round(demand, 12).tobytes()
        if key in seen:
            continue
        seen.add(key)
        tested += 1
        ok, _ = achievable_relaxed(demand, mx, method=method)
        if not ok:
            return DominanceResult(False, demand, np.asarray(labels), tested, exhaustive)
    return DominanceResult(True, None, None, tested, exhaustive)


def pad_witness(witness, n):
    """Extend an ``(m, q)`` failing demand to ``n >= m`` agents with zero rows."""
    witness = np.asarray(witness, dtype=np.float64)
    if n < witness.shape[0]:
        raise ValueError("cannot pad to fewer agents")
    return np.vstack([witness, np.zeros((n - witness.shape[0], witness.shape[1]))])


def witness_fails(mx, witness, method="highs"):
    """True when ``witness`` is not achievable in ``mx`` (any agent count)."""
    return not achievable_relaxed(witness, mx, method=method)[0]


def perturb_mass(my, point=0, factor=1.1):
    """Scale one point's weight, raising every layer mass it carries."""
    w = np.array(my.weights)
    w[point] *= factor
    return build_measure(my.points, w, my.densities)


# ---------------------------------------------------------------------------
# layered Kantorovich problem


@dataclass
class KantorovichResult:
    """Optimal layered transport between two measures.

    ``phi`` (one entry per source point) and ``psi`` (one row per target
    point) satisfy ``phi_t + psi_s . zeta_X(t) <= c(t, s)``.
    """

    value: float
    plan: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    dual_value: float

    @property
    def relative_gap(self):
        return abs(self.value - self.dual_value) / max(1.0, abs(self.value))


def kantorovich_program(mx, my, pair_cost):
    """LP over plans ``pi[t, s] >= 0`` with source marginal ``w`` and layered target marginals."""
    _same_layers(mx, my)
    tx, ty, q = mx.n_points, my.n_points, mx.n_layers
    C = check_matrix(pair_cost, "pair_cost", shape=(tx, ty))
    rows = np.kron(np.eye(tx), np.ones((1, ty)))
    push = np.zeros((ty * q, tx * ty))
    for s in range(ty):
        push[s * q:(s + 1) * q, s::ty] = mx.densities.T
    A = np.vstack([rows, push])
    b = np.concatenate([mx.weights, my.layer_weights.ravel()])
    return LinearProgram(C.ravel(), A, "==", b)


def kantorovich_dual_value(mx, my, phi, psi):
    """``sum_t w_t phi_t + sum_s w_s psi_s . zeta_Y(s)``."""
    return float(mx.weights @ phi + np.sum(my.layer_weights * psi))


def dual_pair_from_psi(mx, my, pair_cost, psi):
    """Complete ``psi`` with the largest feasible ``phi``."""
    C = check_matrix(pair_cost, "pair_cost", shape=(mx.n_points, my.n_points))
    psi = np.asarray(psi, dtype=np.float64).reshape(my.n_points, my.n_layers)
    phi = (C - mx.densities @ psi.T).min(axis=1)
    return phi, psi


def dual_violation(mx, my, pair_cost, phi, psi):
    """Largest excess of ``phi_t + psi_s . zeta_X(t)`` over ``c(t, s)``."""
    C = np.asarray(pair_cost, dtype=np.float64)
    lhs = phi[:, None] + mx.densities @ psi.T
    return float(np.max(lhs - C, initial=0.0))


def kantorovich_q(mx, my, pair_cost, method="highs"):
    """Solve the layered Kantorovich problem.

    Returns
    -------
    KantorovichResult

    Raises
    ------
    InfeasiblePlan
        No plan has the required marginals (no kernel from ``mx`` to ``my``).
    """
    p = kantorovich_program(mx, my, pair_cost)
    sol = solve_lp(p, method=method)
    if sol.status is LpStatus.INFEASIBLE:
        raise InfeasiblePlan("no plan carries the layers of X onto those of Y")
    if sol.status is not LpStatus.OPTIMAL:
        raise InfeasiblePlan(f"layered transport LP ended {sol.status.value}")
    tx, ty = mx.n_points, my.n_points
    phi = sol.duals[:tx].copy()
    psi = sol.duals[tx:].reshape(ty, mx.n_layers).copy()
    plan = np.clip(sol.x.reshape(tx, ty), 0.0, None)
    return KantorovichResult(float(sol.objective), plan, phi, psi,
                             kantorovich_dual_value(mx, my, phi, psi))


@dataclass
class OrderReport:
    """The three order criteria side by side."""

    kernel: bool
    convex: bool
    sampling: bool
    failing_function: str = None
    witness: np.ndarray = None
    certificate: FarkasCertificate = field(default=None, repr=False)
    certificate_valid: bool = None
    kernel_matrix: np.ndarray = field(default=None, repr=False)
    exhaustive: bool = False

    @property
    def consistent(self):
        return self.kernel == self.convex == self.sampling

    def to_dict(self):
        out = {
            "kernel_exists": self.kernel,
            "convex_criterion": self.convex,
            "dominates_n": self.sampling,
            "consistent": self.consistent,
            "sampling_exhaustive": self.exhaustive,
        }
        if self.failing_function is not None:
            out["failing_function"] = self.failing_function
        if self.witness is not None:
            out["witness"] = self.witness.tolist()
        if self.certificate_valid is not None:
            out["certificate_valid"] = self.certificate_valid
        return out


def compare(mx, my, n=2, trials=100, seed=None, family=None, method="highs"):
    """Run the kernel, convex and sampling criteria on one pair."""
    ok, ev = kernel_exists(mx, my, method)
    convex, failing = convex_criterion(mx, my, family)
    dom = dominates_n(mx, my, n, trials=trials, seed=seed, method=method)
    rep = OrderReport(ok, convex, dom.holds, failing, dom.witness, exhaustive=dom.exhaustive)
    if ok:
        rep.kernel_matrix = ev
    else:
        rep.certificate = ev
        rep.certificate_valid = ev.verify(kernel_program(mx, my))
    return rep


def mass_dominates(mx, my, tol=CRITERION_TOL):
    """Layer masses of ``mx`` are at least those of ``my``."""
    return bool(np.all(total_mass(mx) >= total_mass(my) - tol))


__all__ = [
    "ConvexTestFamily", "DominanceResult", "KantorovichResult", "OrderReport", "compare",
    "convex_criterion", "convex_integral", "dominates", "dominates_n", "dual_pair_from_psi",
    "dual_violation", "kantorovich_dual_value", "kantorovich_program", "kantorovich_q",
    "kernel_exists", "kernel_program", "kernel_pushforward", "mass_dominates", "pad_witness",
    "perturb_mass", "random_kernel", "witness_fails",
]
