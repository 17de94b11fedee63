"""Multilayer perceptrons with ReLU hidden layers, trained with Adam.

Regression nets have one identity output and minimise half the mean squared
error on internally standardized targets. Classification nets have a 2-way
softmax output and minimise mean cross-entropy.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergedLoss, EmptyData, InputError
from .forest import _check_task, check_binary, check_X

log = logging.getLogger(__name__)

VARIATIONS = {
    1: (20, 10, 5),
    2: (40, 20, 10, 5),
    3: (60, 30, 15, 7),
    4: (80, 40, 20, 10, 5),
    5: (100, 50, 25, 12, 6),
    6: (120, 60, 30, 15, 7),
    7: (140, 70, 35, 17, 8),
    8: (160, 80, 40, 20, 10),
    9: (80, 40, 20, 20, 20, 20, 10, 5),
    10: (100, 50, 25, 25, 25, 25, 12, 6),
    11: (120, 60, 30, 30, 30, 30, 15, 7),
    12: (140, 70, 35, 35, 35, 35, 17, 8),
    13: (160, 80, 40, 40, 40, 40, 20, 10),
}


def hidden_layers(variation_id):
    try:
        return VARIATIONS[int(variation_id)]
    except (KeyError, ValueError):
        raise InputError(f"MLP variation must be 1-13, got {variation_id!r}") from None


@dataclass
class MlpModel:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    task: str
    variation_id: int | None = None
    y_mean: float = 0.0
    y_scale: float = 1.0
    params: dict = field(default_factory=dict)
    loss_history: list[float] = field(default_factory=list)

    kind = "mlp"

    @property
    def n_features(self):
        return self.weights[0].shape[0]

    @property
    def n_parameters(self):
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    # -- forward / backward ---------------------------------------------

    def _forward(self, X):
        acts = [X]
        pre = []
        a = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            pre.append(z)
            a = z if i == last else np.maximum(z, 0.0)
            acts.append(a)
        return pre, acts

    def _targets(self, y):
        if self.task == "classification":
            return np.eye(2)[check_binary(y)]
        return ((np.asarray(y, dtype=float) - self.y_mean) / self.y_scale)[:, None]

    def loss(self, X, y) -> float:
        """Training loss on raw targets (``y`` unscaled)."""
        out = self._forward(np.asarray(X, dtype=float))[1][-1]
        return _loss(out, self._targets(y), self.task)

    def gradients(self, X, y):
        """Backprop gradients ``[(dW, db), ...]`` of :meth:`loss`."""
        X = np.asarray(X, dtype=float)
        pre, acts = self._forward(X)
        T = self._targets(y)
        n = X.shape[0]
        out = acts[-1]
        if self.task == "classification":
            dz = (_softmax(out) - T) / n
        else:
            dz = (out - T) / n
        grads = []
        for i in range(len(self.weights) - 1, -1, -1):
            dW = acts[i].T @ dz
            db = dz.sum(axis=0)
            grads.append((dW, db))
            if i > 0:
                dz = (dz @ self.weights[i].T) * (pre[i - 1] > 0)
        return grads[::-1]

    def relu_pattern(self, X):
        pre, _ = self._forward(np.asarray(X, dtype=float))
        return np.concatenate([(z > 0).ravel() for z in pre[:-1]]) if len(pre) > 1 else np.zeros(0, bool)

    # -- prediction -------------------------------------------------------

    def predict_proba(self, X):
        if self.task != "classification":
            raise InputError("predict_proba is only defined for classification")
        X = check_X(X, self.n_features)
        return _softmax(self._forward(X)[1][-1])

    def predict(self, X):
        if self.task == "classification":
            p = self.predict_proba(X)
            return (p[:, 1] > p[:, 0]).astype(int)
        X = check_X(X, self.n_features)
        return self._forward(X)[1][-1][:, 0] * self.y_scale + self.y_mean

    def to_dict(self):
        return {
            "hyperparameters": {
                "layer_sizes": list(self.layer_sizes), "task": self.task,
                "variation_id": self.variation_id, **self.params,
            },
            "parameters": {
                "weights": [W.tolist() for W in self.weights],
                "biases": [b.tolist() for b in self.biases],
                "y_mean": self.y_mean, "y_scale": self.y_scale,
            },
        }

    @classmethod
    def from_dict(cls, d):
        hp = dict(d["hyperparameters"])
        prm = d["parameters"]
        sizes = tuple(hp.pop("layer_sizes"))
        task = hp.pop("task")
        vid = hp.pop("variation_id")
        weights = [np.array(W, dtype=float) for W in prm["weights"]]
        biases = [np.array(b, dtype=float) for b in prm["biases"]]
        return cls(sizes, weights, biases, task, vid, prm["y_mean"], prm["y_scale"], hp)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _loss(out, T, task):
    if task == "classification":
        z = out - out.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return float(-(T * logp).sum() / out.shape[0])
    return float(0.5 * np.mean(np.sum((out - T) ** 2, axis=1)))


def init_mlp(n_features, layer_sizes, task, seed=0, variation_id=None) -> MlpModel:
    """He-normal weights (variance 2 / fan-in) and zero biases."""
    rng = np.random.default_rng(seed)
    dims = [n_features, *layer_sizes, 2 if task == "classification" else 1]
    weights = [rng.normal(0.0, math.sqrt(2.0 / a), size=(a, b)) for a, b in zip(dims, dims[1:])]
    biases = [np.zeros(b) for b in dims[1:]]
    return MlpModel(tuple(layer_sizes), weights, biases, task, variation_id)


def mlp_fit(
    X,
    y,
    variation_id=13,
    task="regression",
    learning_rate=1e-3,
    epochs=500,
    batch_size=32,
    seed=0,
    patience=50,
    layer_sizes=None,
) -> MlpModel:
    """Mini-batch Adam training; stops early after ``patience`` epochs without improvement."""
    _check_task(task)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise EmptyData("MLP needs a non-empty X with one target per row")
    sizes = tuple(layer_sizes) if layer_sizes is not None else hidden_layers(variation_id)
    model = init_mlp(X.shape[1], sizes, task, seed, variation_id if layer_sizes is None else None)
    if task == "regression":
        model.y_mean = float(y.mean())
        sd = float(y.std())
        model.y_scale = sd if sd > 0 else 1.0
    else:
        check_binary(y)
    model.params = {"learning_rate": learning_rate, "epochs": epochs,
                    "batch_size": batch_size, "seed": seed, "patience": patience}

    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 1]))
    params = [p for pair in zip(model.weights, model.biases) for p in pair]
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    n = X.shape[0]
    best = np.inf
    stale = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(0, n, batch_size):
                idx = order[s:s + batch_size]
                grads = [g for pair in model.gradients(X[idx], y[idx]) for g in pair]
                step += 1
                lr_t = learning_rate * math.sqrt(1 - b2 ** step) / (1 - b1 ** step)
                for p, g, a, v in zip(params, grads, m1, m2):
                    a *= b1
                    a += (1 - b1) * g
                    v *= b2
                    v += (1 - b2) * g * g
                    p -= lr_t * a / (np.sqrt(v) + eps)
            current = model.loss(X, y)
        if not np.isfinite(current):
            raise DivergedLoss(f"loss became {current} at epoch {epoch}")
        model.loss_history.append(current)
        if current < best - 1e-8:
            best = current
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                log.debug("early stop at epoch %d", epoch)
                break
    return model


def _downscaled(model, max_params, seed):
    if model.n_parameters <= max_params:
        return model
    scale = 1.0
    while True:
        scale *= 0.9
        sizes = tuple(max(1, int(round(w * scale))) for w in model.layer_sizes)
        probe = init_mlp(model.n_features, sizes, model.task, seed)
        if probe.n_parameters <= max_params:
            probe.y_mean, probe.y_scale = model.y_mean, model.y_scale
            return probe


def gradient_check(model: MlpModel, X, y, h=1e-5, max_params=5000, floor=1e-6, grad_fn=None, seed=0):
    """Largest relative gap between backprop and central-difference gradients.

    Every parameter is checked. Models above ``max_params`` parameters are
    replaced by a freshly initialised copy with proportionally narrower
    layers. The relative error of one entry is
    ``|a - n| / max(|a|, |n|, floor)``. A step that flips any ReLU unit's
    sign is retried at ``h/10`` and ``h/100``; entries that cannot avoid the
    kink are left out.

    ``grad_fn(model, X, y)`` replaces :meth:`MlpModel.gradients` (used to
    self-test the harness).
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise EmptyData("gradient check needs a non-empty batch")
    net = _downscaled(model, max_params, seed)
    grads = (grad_fn or MlpModel.gradients)(net, X, y)
    pattern = net.relu_pattern(X)
    worst = 0.0
    for (W, b), (dW, db) in zip(zip(net.weights, net.biases), grads):
        for P, G in ((W, dW), (b, db)):
            flat = P.reshape(-1)
            gflat = G.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                numeric = None
                for step in (h, h / 10, h / 100):
                    flat[i] = orig + step
                    ok = np.array_equal(net.relu_pattern(X), pattern)
                    lp = net.loss(X, y)
                    flat[i] = orig - step
                    ok = ok and np.array_equal(net.relu_pattern(X), pattern)
                    lm = net.loss(X, y)
                    flat[i] = orig
                    if ok:
                        numeric = (lp - lm) / (2 * step)
                        break
                if numeric is None:
                    continue
                a = gflat[i]
                err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                worst = max(worst, err)
    return worst
