"""scikit-learn style wrapper around a task set on a robot manifold."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .engine import Policy
from .manifolds import ChartPoint, TangentState, manifold_from_descriptor
from .tasks import BarrierParams, check_assumptions, make_attractor_task, make_damping_task, make_obstacle_task


class PBDSPolicy(BaseEstimator):
    """Acceleration policy as an estimator.

    There is nothing to learn: ``fit`` builds the task set and checks the
    weighting, rank and dissipation assumptions on the sample states, and
    ``predict`` maps rows ``[q, v]`` (chart ``chart``) to accelerations.

    Parameters
    ----------
    manifold : dict
        Manifold descriptor, e.g. ``{"kind": "sphere2"}``.
    goal : array-like
        Goal in embedded coordinates.
    damping : float
        Ambient damping coefficient.
    obstacles : sequence of (center, radius)
        Ball obstacles in embedded coordinates.
    barrier : tuple
        ``(a, b)`` of the obstacle barrier metric.
    chart : int
        Chart in which rows of ``X`` are expressed.
    engine : {"pbds", "pbds_tree", "gds"}
    """

    def __init__(self, manifold=None, goal=None, damping=4.0, obstacles=(), barrier=(2.0, 2.0), chart=0,
                 engine="pbds"):
        self.manifold = manifold
        self.goal = goal
        self.damping = damping
        self.obstacles = obstacles
        self.barrier = barrier
        self.chart = chart
        self.engine = engine

    def _build(self):
        man = manifold_from_descriptor(self.manifold or {"kind": "sphere2"})
        tasks = []
        if self.goal is not None:
            tasks.append(make_attractor_task(man.project(self.goal), man))
        tasks.append(make_damping_task(man, self.damping))
        a, b = self.barrier
        for center, radius in self.obstacles:
            tasks.append(make_obstacle_task(man, center, radius, BarrierParams(a, b)))
        return man, tasks

    def _split(self, X):
        m = self.manifold_.dimension
        return X[:, :m], X[:, m:]

    def fit(self, X, y=None):
        """Validate assumptions on the states in ``X`` (shape ``(n, 2m)``)."""
        self.manifold_, self.tasks_ = self._build()
        m = self.manifold_.dimension
        X = check_array(X, dtype=float)
        if X.shape[1] != 2 * m:
            raise ValueError(f"expected {2 * m} columns [q, v], got {X.shape[1]}")
        self.n_features_in_ = X.shape[1]
        Q, V = self._split(X)
        states = [TangentState(ChartPoint(self.chart, q), v) for q, v in zip(Q, V)]
        self.assumption_report_ = check_assumptions(self.tasks_, states)
        self.policy_ = Policy(self.tasks_, self.manifold_, self.engine)
        return self

    def predict(self, X):
        """Accelerations, one row per state."""
        check_is_fitted(self, "policy_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        Q, V = self._split(X)
        return np.array([self.policy_.acceleration(ChartPoint(self.chart, q), v) for q, v in zip(Q, V)])

    def lyapunov(self, X):
        check_is_fitted(self, "policy_")
        X = check_array(X, dtype=float)
        Q, V = self._split(X)
        return np.array([self.policy_.lyapunov(ChartPoint(self.chart, q), v) for q, v in zip(Q, V)])
