"""Discretized vector-valued measures.

A :class:`LayeredMeasure` is a finite weighted point cloud. Point ``t`` carries
scalar mass ``weights[t]`` and a density row ``densities[t]`` on the probability
simplex; layer ``j`` puts mass ``weights[t] * densities[t, j]`` on that point.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ._validation import check_costs, check_random_state
from .exceptions import DuplicatePoint, EmptyMeasure, NonSimplexRow, SizeMismatch

SIMPLEX_ACCEPT_TOL = 1e-9
SIMPLEX_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class LayeredMeasure:
    """Weighted point cloud with per-point layer densities.

    Build instances with :func:`build_measure`; the constructor does not validate.
    Arrays are stored read-only.
    """

    points: np.ndarray
    weights: np.ndarray
    densities: np.ndarray

    @property
    def n_points(self):
        return self.weights.shape[0]

    @property
    def n_layers(self):
        return self.densities.shape[1]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def layer_weights(self):
        """``(T, q)`` array of per-point layer masses ``w_t * zeta_j(x_t)``."""
        return self.weights[:, None] * self.densities

    def to_dict(self):
        return {
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
            "densities": self.densities.tolist(),
        }

    def __repr__(self):
        return f"LayeredMeasure(T={self.n_points}, q={self.n_layers}, d={self.dim})"


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def build_measure(points, weights, densities):
    """Validate and build a :class:`LayeredMeasure`.

    Parameters
    ----------
    points : array-like of shape (T, d) or (T,)
        Pairwise distinct coordinates. A 1-D array is read as ``d = 1``.
    weights : array-like of shape (T,)
        Strictly positive point masses.
    densities : array-like of shape (T, q)
        Rows on the probability simplex. Rows summing to within ``1e-9`` of one
        are renormalized; anything further off is rejected.

    Raises
    ------
    EmptyMeasure
        No points or no layers.
    NonSimplexRow
        A density row has a negative entry or its sum is off by more than ``1e-9``.
    DuplicatePoint
        Two points have identical coordinates.
    """
    points = np.asarray(points, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    densities = np.asarray(densities, dtype=np.float64)
    if weights.ndim != 1 or weights.size == 0:
        raise EmptyMeasure("a measure needs at least one point")
    T = weights.shape[0]
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    if densities.ndim == 1:
        densities = densities.reshape(-1, 1)
    if densities.ndim != 2 or densities.shape[1] == 0:
        raise EmptyMeasure("a measure needs at least one layer")
    if points.ndim != 2 or points.shape[0] != T or points.shape[1] == 0:
        raise SizeMismatch(f"points have shape {points.shape}, expected ({T}, d)")
    if densities.shape[0] != T:
        raise SizeMismatch(f"densities have shape {densities.shape}, expected ({T}, q)")
    for name, arr in (("points", points), ("weights", weights), ("densities", densities)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")
    if np.any(weights <= 0):
        raise ValueError("weights must be strictly positive")

    for t, row in enumerate(densities):
        if np.any(row < -SIMPLEX_TOL) or abs(row.sum() - 1.0) > SIMPLEX_ACCEPT_TOL:
            raise NonSimplexRow(t, f"density row {t} = {row.tolist()} is not on the simplex")
    # rows already within SIMPLEX_TOL are kept bit for bit, so rebuilding is idempotent
    fix = np.any(densities < 0, axis=1) | (np.abs(densities.sum(axis=1) - 1.0) > SIMPLEX_TOL)
    if fix.any():
        rows = np.clip(densities[fix], 0.0, None)
        densities = densities.copy()
        densities[fix] = rows / rows.sum(axis=1, keepdims=True)

    _, first, counts = np.unique(points, axis=0, return_index=True, return_counts=True)
    if np.any(counts > 1):
        dup = int(first[np.argmax(counts > 1)])
        raise DuplicatePoint(f"point {dup} appears {counts.max()} times")

    return LayeredMeasure(_frozen(points), _frozen(weights), _frozen(densities))


def total_mass(measure):
    """Layer masses ``mu^j(X) = sum_t w_t zeta_j(x_t)`` as a length-q vector."""
    return measure.weights @ measure.densities


@dataclass
class GenericityReport:
    """Advisory diagnostics for the genericity assumptions; nothing here blocks a run."""

    duplicate_rows: list = field(default_factory=list)
    directions: np.ndarray = None
    null_weight: np.ndarray = None
    cost_alignment_weight: dict = field(default_factory=dict)

    @property
    def max_null_weight(self):
        return float(self.null_weight.max()) if self.null_weight is not None and self.null_weight.size else 0.0

    @property
    def max_cost_alignment_weight(self):
        vals = [float(v.max()) for v in self.cost_alignment_weight.values() if v.size]
        return max(vals, default=0.0)

    @property
    def flagged(self):
        return bool(self.duplicate_rows) or self.max_null_weight > 0 or self.max_cost_alignment_weight > 0


def genericity_report(measure, costs=None, probes=16, seed=None, directions=None, atol=1e-9):
    """Check a discrete instance against surrogates of the genericity assumptions.

    Reports (a) groups of identical density rows, (b) for each probe direction
    ``lam`` the total weight with ``|lam . zeta| < atol``, and (c) for each agent
    pair ``(i, k)`` the total weight with ``|lam . zeta - (c_i - c_k)| < atol``.

    Parameters
    ----------
    measure : LayeredMeasure
    costs : array-like of shape (n, T), optional
        Without costs part (c) is skipped.
    probes : int
        Number of random unit directions when ``directions`` is not given.
    seed : int or None
    directions : array-like of shape (k, q), optional
        Explicit probe directions; they are normalized to unit length.
    """
    q = measure.n_layers
    if directions is None:
        rng = check_random_state(seed)
        directions = rng.standard_normal((probes, q))
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if directions.shape[1] != q:
        raise SizeMismatch(f"directions have {directions.shape[1]} columns, expected {q}")
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)

    _, inverse, counts = np.unique(measure.densities, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    duplicate_rows = [np.flatnonzero(inverse == g).tolist() for g in np.flatnonzero(counts > 1)]
    duplicate_rows.sort()

    proj = measure.densities @ directions.T  # (T, k)
    null_weight = (np.abs(proj) < atol).T @ measure.weights

    alignment = {}
    if costs is not None:
        costs = check_costs(costs, measure)
        for i, k in combinations(range(costs.shape[0]), 2):
            diff = (costs[i] - costs[k])[:, None]
            alignment[(i + 1, k + 1)] = (np.abs(proj - diff) < atol).T @ measure.weights
    return GenericityReport(duplicate_rows, directions, null_weight, alignment)
