"""scikit-learn style wrappers around the collision model.

Samples are Bloch angles of the real pure input family, one per row, so the
estimators slot into pipelines and ``clone``/``get_params`` tooling::

    >>> model = CollisionModel(delta=0.0, steps=200).fit([[0.0], [1.2]])
    >>> model.transform([[0.0]]).shape
    (1, 201)
"""
import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .engine import ModelParams, system_states
from .nonmarkov import optimize_measure
from .qmath import bloch_state, env_state

__all__ = ["CollisionModel", "NonMarkovianityMeasure", "check_angles"]


def check_angles(X):
    """Validate a column of Bloch angles; returns a 1-D float array."""
    X = check_array(X, ensure_2d=False, dtype=np.float64)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"expected one angle per sample, got {X.shape[1]} features")
        X = X[:, 0]
    return X


class _ParamsMixin:
    def _model_params(self):
        return ModelParams(
            gamma=self.gamma,
            delta=self.delta,
            steps=self.steps,
            strategy=self.strategy,
            env_prep=env_state(self.env_excited),
            collision_probability=self.collision_probability,
            seed=self.seed,
        )


class CollisionModel(_ParamsMixin, TransformerMixin, BaseEstimator):
    """Reduced system dynamics for a batch of input angles.

    ``fit`` evolves every sample under one shared draw sequence and stores
    the states in ``system_states_`` (n_samples, steps+1, 2, 2).
    ``transform`` returns the ground-state fidelity per step.
    """

    def __init__(self, gamma=0.05, delta=math.pi / 2, steps=30_000, strategy=2,
                 env_excited=0.0, collision_probability=1.0, seed=0):
        self.gamma = gamma
        self.delta = delta
        self.steps = steps
        self.strategy = strategy
        self.env_excited = env_excited
        self.collision_probability = collision_probability
        self.seed = seed

    def fit(self, X, y=None):
        thetas = check_angles(X)
        self.params_ = self._model_params()
        self.thetas_ = thetas
        self.system_states_ = system_states(
            np.array([bloch_state(t) for t in thetas]), self.params_
        )
        self.n_features_in_ = 1
        return self

    def _states_for(self, X):
        check_is_fitted(self, "system_states_")
        thetas = check_angles(X)
        if np.array_equal(thetas, self.thetas_):
            return self.system_states_
        return system_states(np.array([bloch_state(t) for t in thetas]), self.params_)

    def transform(self, X):
        return self._states_for(X)[:, :, 0, 0].real

    def predict(self, X):
        """Final reduced system state of each sample, shape (n, 2, 2)."""
        return self._states_for(X)[:, -1]


class NonMarkovianityMeasure(_ParamsMixin, BaseEstimator):
    """Grid-optimised trace-distance measure as an estimator.

    After ``fit``: ``n_value_``, ``best_pair_``, ``increase_intervals_`` and
    ``series_``. ``score`` returns ``n_value_``.
    """

    def __init__(self, gamma=0.05, delta=math.pi / 2, steps=30_000, strategy=2,
                 env_excited=0.0, collision_probability=1.0, seed=0, grid=64,
                 pairs="orthogonal"):
        self.gamma = gamma
        self.delta = delta
        self.steps = steps
        self.strategy = strategy
        self.env_excited = env_excited
        self.collision_probability = collision_probability
        self.seed = seed
        self.grid = grid
        self.pairs = pairs

    def fit(self, X=None, y=None):
        result = optimize_measure(self._model_params(), self.grid, self.pairs)
        self.result_ = result
        self.n_value_ = result.n_value
        self.best_pair_ = result.best_pair
        self.increase_intervals_ = result.increase_intervals
        self.series_ = result.series
        return self

    def score(self, X=None, y=None):
        check_is_fitted(self, "n_value_")
        return self.n_value_
