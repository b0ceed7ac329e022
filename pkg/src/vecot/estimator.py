"""scikit-learn style wrapper around the dual solver."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matrix
from .dual_solver import SolverConfig, SolverStatus, lp_dual_value, solve_dual
from .measure import build_measure
from .pricing import _labels_from_table, price_incomes_for


class PriceEquilibrium(TransformerMixin, BaseEstimator):
    """Fit equilibrium prices for a demand matrix on a weighted set of density rows.

    ``X`` holds one density row per point (rows on the probability simplex),
    ``sample_weight`` the point masses. After fitting, :meth:`predict` sends
    new rows to their income-maximizing agent and :meth:`transform` returns
    the income table (column 0 is the null agent).

    Parameters
    ----------
    step : {"diminishing", "polyak"}
        ``"polyak"`` uses the transport LP optimum as its target value.
    tol : float
    max_iter : int
    step_scale : float
    divergence_threshold : float
    random_state : int or None
        Seeds a random start; None starts from zero prices.

    Attributes
    ----------
    prices_ : ndarray of shape (n_agents, n_layers)
    report_ : DualReport
    status_ : SolverStatus
    labels_ : ndarray of shape (n_points,)
        Training assignment under lowest-index tie breaking.
    n_features_in_ : int
    """

    def __init__(self, step="diminishing", tol=1e-6, max_iter=50_000, step_scale=1.0,
                 divergence_threshold=1e4, random_state=None):
        self.step = step
        self.tol = tol
        self.max_iter = max_iter
        self.step_scale = step_scale
        self.divergence_threshold = divergence_threshold
        self.random_state = random_state

    def fit(self, X, y=None, *, demand, sample_weight=None, costs=None, points=None):
        """Run the dual ascent.

        Parameters
        ----------
        X : array-like of shape (n_points, n_layers)
        y : ignored
        demand : array-like of shape (n_agents, n_layers)
        sample_weight : array-like of shape (n_points,), optional
            Point masses; default one each.
        costs : array-like of shape (n_agents, n_points), optional
        points : array-like of shape (n_points, d), optional
            Coordinates; default the row index.
        """
        X = check_matrix(X, "X")
        T = X.shape[0]
        weights = np.ones(T) if sample_weight is None else sample_weight
        if points is None:
            points = np.arange(T, dtype=np.float64)
        measure = build_measure(points, weights, X)
        demand = np.atleast_2d(np.asarray(demand, dtype=np.float64))
        target_value = None
        if self.step == "polyak":
            target_value = lp_dual_value(measure, costs, demand)[0]
        cfg = SolverConfig(max_iter=self.max_iter, tol=self.tol,
                           divergence_threshold=self.divergence_threshold, step=self.step,
                           step_scale=self.step_scale, target_value=target_value,
                           seed=self.random_state)
        self.report_ = solve_dual(measure, costs, demand, cfg)
        self.prices_ = self.report_.prices
        self.status_ = self.report_.status
        self.n_features_in_ = X.shape[1]
        self.labels_ = self.predict(X, costs)
        return self

    @property
    def converged_(self):
        return self.status_ is SolverStatus.CONVERGED

    def _incomes(self, X, costs):
        check_is_fitted(self, "prices_")
        X = check_matrix(X, "X", shape=(None, self.n_features_in_))
        if costs is not None:
            costs = check_matrix(costs, "costs", shape=(self.prices_.shape[0], X.shape[0]))
        return price_incomes_for(X, costs, self.prices_)

    def transform(self, X, costs=None):
        """Income table of shape ``(n_points, n_agents + 1)``."""
        return self._incomes(X, costs)

    def predict(self, X, costs=None):
        """Income-maximizing label per row (0 = unsold), lowest label on ties."""
        return _labels_from_table(self._incomes(X, costs), None, 1e-12)
