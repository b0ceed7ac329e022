"""Input validation helpers shared by all modules."""

import numpy as np
from sklearn.utils import check_array

from .exceptions import SizeMismatch

__all__ = [
    "check_costs",
    "check_demand",
    "check_labels",
    "check_matrix",
    "check_prices",
    "check_random_state",
]


def check_matrix(a, name, *, shape=None, ensure_2d=True):
    """Return ``a`` as a finite float64 array, optionally checking its shape.

    ``shape`` entries that are ``None`` are not checked.
    """
    if ensure_2d:
        arr = check_array(a, dtype=np.float64, ensure_2d=True, ensure_min_samples=1,
                          ensure_min_features=1, ensure_all_finite=True, input_name=name)
    else:
        arr = np.asarray(a, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")
    if shape is not None:
        if arr.ndim != len(shape) or any(
            want is not None and got != want for got, want in zip(arr.shape, shape)
        ):
            raise SizeMismatch(f"{name} has shape {arr.shape}, expected {shape}")
    return arr


def check_costs(costs, measure, n_agents=None):
    """Validate an ``(n, T)`` cost field against ``measure``; ``None`` means zero cost."""
    if costs is None:
        if n_agents is None:
            raise ValueError("n_agents is required when costs is None")
        return np.zeros((n_agents, measure.n_points))
    costs = check_matrix(costs, "costs", shape=(n_agents, measure.n_points))
    return costs


def check_prices(prices, n_layers, n_agents=None):
    prices = np.atleast_2d(np.asarray(prices, dtype=np.float64))
    return check_matrix(prices, "prices", shape=(n_agents, n_layers))


def check_demand(demand, n_layers, n_agents=None):
    demand = np.atleast_2d(np.asarray(demand, dtype=np.float64))
    demand = check_matrix(demand, "demand", shape=(n_agents, n_layers))
    if np.any(demand < 0):
        raise ValueError("demand must be entrywise nonnegative")
    return demand


def check_labels(labels, n_points, n_agents):
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != n_points:
        raise SizeMismatch(f"labels have shape {labels.shape}, expected ({n_points},)")
    if labels.size and not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise ValueError("labels must be integers")
    labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() > n_agents):
        raise ValueError(f"labels must lie in 0..{n_agents}")
    return labels


def check_random_state(seed):
    """``numpy.random.Generator`` from None, an int, a SeedSequence or a Generator."""
    if isinstance(seed, np.random.RandomState):
        raise TypeError("pass an int or a numpy Generator, not a legacy RandomState")
    return np.random.default_rng(seed)
