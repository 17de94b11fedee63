"""Closed-form ridge regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyData, InputError, SingularSystem
from .forest import check_X

ALPHA_GRID = (1.0, 0.1, 0.01)


@dataclass
class RidgeModel:
    weights: np.ndarray
    intercept: float
    alpha: float

    kind = "ridge"
    task = "regression"

    @property
    def n_features(self):
        return len(self.weights)

    def predict(self, X):
        return check_X(X, self.n_features) @ self.weights + self.intercept

    def to_dict(self):
        return {
            "hyperparameters": {"alpha": self.alpha},
            "parameters": {"weights": self.weights.tolist(), "intercept": self.intercept},
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["parameters"]["weights"], dtype=float),
                   d["parameters"]["intercept"], d["hyperparameters"]["alpha"])


def ridge_fit(X, y, alpha=1.0) -> RidgeModel:
    """Solve ``(Xc'Xc + alpha I) w = Xc'yc`` on centred data; intercept is unpenalized."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[0] != y.shape[0]:
        raise EmptyData("ridge needs at least 2 rows and one target per row")
    if alpha < 0:
        raise InputError("alpha must be >= 0")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    A = Xc.T @ Xc + alpha * np.eye(X.shape[1])
    if alpha == 0 and np.linalg.matrix_rank(A) < A.shape[0]:
        raise SingularSystem("collinear features with alpha = 0")
    try:
        w = np.linalg.solve(A, Xc.T @ (y - y_mean))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from None
    return RidgeModel(w, float(y_mean - w @ x_mean), float(alpha))
