"""Second-order gradient-boosted trees (squared-error or logistic loss)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyData, InputError
from .forest import _check_task, check_binary, check_X
from .tree import Tree, grow_tree


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class GbtModel:
    trees: list[Tree]
    learning_rate: float
    n_rounds: int
    base_score: float
    l2_leaf_penalty: float
    task: str
    n_features: int
    params: dict = field(default_factory=dict)

    kind = "gbt"

    def decision_function(self, X) -> np.ndarray:
        X = check_X(X, self.n_features)
        raw = np.zeros(X.shape[0])
        for t in self.trees:
            raw += t.predict(X)[:, 0]
        return self.base_score + self.learning_rate * raw

    def predict_proba(self, X) -> np.ndarray:
        if self.task != "classification":
            raise InputError("predict_proba is only defined for classification")
        p = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        if self.task == "classification":
            proba = self.predict_proba(X)
            return (proba[:, 1] > proba[:, 0]).astype(int)
        return self.decision_function(X)

    def to_dict(self):
        return {
            "hyperparameters": {
                "learning_rate": self.learning_rate, "n_rounds": self.n_rounds,
                "l2_leaf_penalty": self.l2_leaf_penalty, "task": self.task, **self.params,
            },
            "parameters": {
                "base_score": self.base_score, "n_features": self.n_features,
                "trees": [t.to_dict() for t in self.trees],
            },
        }

    @classmethod
    def from_dict(cls, d):
        hp = dict(d["hyperparameters"])
        core = {k: hp.pop(k) for k in ("learning_rate", "n_rounds", "l2_leaf_penalty", "task")}
        prm = d["parameters"]
        return cls(
            [Tree.from_dict(t) for t in prm["trees"]], base_score=prm["base_score"],
            n_features=prm["n_features"], params=hp, **core,
        )


def gbt_fit(
    X,
    y,
    n_rounds=100,
    learning_rate=0.1,
    max_depth=3,
    l2_leaf_penalty=1.0,
    task="regression",
    seed=0,
    subsample=1.0,
    min_samples_leaf=1,
) -> GbtModel:
    """Stagewise boosting; each tree fits gradient/hessian statistics of the loss.

    Leaf values are ``-G / (H + l2_leaf_penalty)``. ``subsample < 1`` draws a
    row subset per round from a stream seeded by ``(seed, round)``.
    """
    _check_task(task)
    if n_rounds < 1:
        raise InputError("n_rounds must be >= 1")
    if not (0.0 <= learning_rate <= 1.0):
        raise InputError("learning_rate must lie in [0, 1]")
    if l2_leaf_penalty < 0:
        raise InputError("l2_leaf_penalty must be >= 0")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise EmptyData("boosting needs a non-empty X with one target per row")
    n, p = X.shape
    if task == "classification":
        y = check_binary(y).astype(float)
        prior = np.clip(y.mean(), 1e-6, 1 - 1e-6)
        base = float(np.log(prior / (1 - prior)))
    else:
        base = float(y.mean())
    F = np.full(n, base)
    trees = []
    for r in range(n_rounds):
        if task == "classification":
            prob = _sigmoid(F)
            neg_grad = y - prob
            hess = np.clip(prob * (1 - prob), 1e-12, None)
        else:
            neg_grad = y - F
            hess = np.ones(n)
        if subsample < 1.0:
            rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), r]))
            idx = np.sort(rng.choice(n, max(1, int(round(subsample * n))), replace=False))
        else:
            idx = np.arange(n)
        tree = grow_tree(
            X[idx], neg_grad[idx], hess[idx], lam=l2_leaf_penalty,
            max_depth=max_depth, min_samples_leaf=min_samples_leaf,
        )
        trees.append(tree)
        F = F + learning_rate * tree.predict(X)[:, 0]
    return GbtModel(
        trees, float(learning_rate), int(n_rounds), base, float(l2_leaf_penalty), task, p,
        {"max_depth": max_depth, "seed": seed, "subsample": subsample, "min_samples_leaf": min_samples_leaf},
    )
