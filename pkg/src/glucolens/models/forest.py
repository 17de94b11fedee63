"""Bagged CART forests for regression and binary classification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch, EmptyData, InputError
from .tree import Tree, grow_tree

TASKS = ("regression", "classification")
N_ESTIMATORS_GRID = (10, 50, 100)
LEAF_CAPS = (24, 48, 96)


def _check_task(task):
    if task not in TASKS:
        raise InputError(f"task must be one of {TASKS}, got {task!r}")
    return task


def check_X(X, n_features):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != n_features:
        raise DimensionMismatch(f"model expects {n_features} features, got {X.shape[1]}")
    return X


def check_binary(y):
    y = np.asarray(y)
    if not np.all((y == 0) | (y == 1)):
        raise InputError("classification labels must be 0/1")
    return y.astype(int)


def canonical_order(X, y):
    """Row permutation sorting rows lexicographically by (features, target)."""
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


@dataclass
class ForestModel:
    trees: list[Tree]
    n_estimators: int
    task: str
    n_features: int
    max_leaf_nodes: int | None = None
    max_features: int | None = None
    seed: int = 0
    params: dict = field(default_factory=dict)

    kind = "forest"

    def predict_proba(self, X) -> np.ndarray:
        if self.task != "classification":
            raise InputError("predict_proba is only defined for classification forests")
        X = check_X(X, self.n_features)
        proba = np.zeros((X.shape[0], 2))
        for t in self.trees:
            proba += t.predict(X)
        return proba / len(self.trees)

    def predict(self, X) -> np.ndarray:
        if self.task == "classification":
            proba = self.predict_proba(X)
            return (proba[:, 1] > proba[:, 0]).astype(int)
        X = check_X(X, self.n_features)
        out = np.zeros(X.shape[0])
        for t in self.trees:
            out += t.predict(X)[:, 0]
        return out / len(self.trees)

    def to_dict(self):
        return {
            "hyperparameters": {
                "n_estimators": self.n_estimators, "task": self.task,
                "max_leaf_nodes": self.max_leaf_nodes, "max_features": self.max_features,
                "seed": self.seed, **self.params,
            },
            "parameters": {"n_features": self.n_features, "trees": [t.to_dict() for t in self.trees]},
        }

    @classmethod
    def from_dict(cls, d):
        hp = dict(d["hyperparameters"])
        core = {k: hp.pop(k) for k in ("n_estimators", "task", "max_leaf_nodes", "max_features", "seed")}
        return cls(
            [Tree.from_dict(t) for t in d["parameters"]["trees"]],
            n_features=d["parameters"]["n_features"], params=hp, **core,
        )


def forest_fit(
    X,
    y,
    n_estimators=100,
    max_leaf_nodes=None,
    task="regression",
    seed=0,
    max_features=None,
    max_depth=None,
    min_samples_leaf=1,
    bootstrap=True,
) -> ForestModel:
    """Fit a random forest.

    Each tree sees a bootstrap sample drawn from a stream seeded by
    ``(seed, tree index)`` and samples ``ceil(sqrt(p))`` (classification) or
    ``ceil(p / 3)`` (regression) candidate features per split. Rows are put
    in a canonical order first, so the fitted forest does not depend on the
    order of the training rows.
    """
    _check_task(task)
    if n_estimators < 1:
        raise InputError("n_estimators must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise EmptyData("forest needs a non-empty X with one target per row")
    n, p = X.shape
    if max_features is None:
        max_features = math.ceil(math.sqrt(p)) if task == "classification" else math.ceil(p / 3)
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    if task == "classification":
        labels = check_binary(y)
        Y = np.eye(2)[labels]
    else:
        Y = y[:, None]

    trees = []
    for t in range(n_estimators):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), t]))
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(grow_tree(
            X[idx], Y[idx], lam=0.0, max_features=max_features, max_depth=max_depth,
            max_leaf_nodes=max_leaf_nodes, min_samples_leaf=min_samples_leaf, rng=rng,
        ))
    return ForestModel(
        trees, n_estimators, task, p, max_leaf_nodes, max_features, seed,
        {"max_depth": max_depth, "min_samples_leaf": min_samples_leaf, "bootstrap": bootstrap},
    )
