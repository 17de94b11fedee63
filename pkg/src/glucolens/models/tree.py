"""Axis-aligned binary trees shared by the forest and boosting models.

One builder serves all three uses. Each row carries a statistic vector ``Y``
and a weight ``h``; a node scores ``sum_c (sum Y_c)**2 / (sum h + lam)`` and its
leaf value is ``sum Y / (sum h + lam)``. With ``Y = y, h = 1, lam = 0`` the
split gain is the squared-error (variance) reduction and leaves hold means;
with one-hot ``Y`` it is the Gini reduction and leaves hold class
frequencies; with ``Y = -gradient, h = hessian`` it is the second-order
boosting gain with leaf value ``-G / (H + lam)``.

Split ties go to the lowest feature index, then the lowest threshold.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_outputs)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return node
            go_left = X[rows, np.where(internal, f, 0)] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self):
        return {
            "feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
            "left": self.left.tolist(), "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.array(d["feature"], dtype=np.intp), np.array(d["threshold"], dtype=float),
            np.array(d["left"], dtype=np.intp), np.array(d["right"], dtype=np.intp),
            np.array(d["value"], dtype=float).reshape(len(d["feature"]), -1),
        )


def _best_split(Xn, Yn, hn, lam, min_leaf):
    """Best (gain, column, position, threshold) over the given columns, or None."""
    n, m = Xn.shape
    if n < 2 * min_leaf:
        return None
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    cY = np.cumsum(Yn[order], axis=0)[:-1]  # (n-1, m, c)
    cH = np.cumsum(hn[order], axis=0)[:-1]  # (n-1, m)
    totY = Yn.sum(axis=0)
    totH = hn.sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        score = (cY ** 2).sum(axis=-1) / (cH + lam) + ((totY - cY) ** 2).sum(axis=-1) / (totH - cH + lam)
    valid = xs[:-1] < xs[1:]
    if min_leaf > 1:
        pos = np.arange(n - 1)
        ok = (pos + 1 >= min_leaf) & (n - pos - 1 >= min_leaf)
        valid &= ok[:, None]
    score = np.where(valid & np.isfinite(score), score, -np.inf)
    flat = score.T.ravel()  # feature-major, thresholds ascending within a feature
    k = int(np.argmax(flat))
    best = flat[k]
    if not np.isfinite(best):
        return None
    col, i = divmod(k, n - 1)
    lo, hi = xs[i, col], xs[i + 1, col]
    thr = lo + (hi - lo) / 2.0
    if not (lo <= thr < hi):
        thr = lo
    parent = float((totY ** 2).sum() / (totH + lam))
    return best - parent, col, thr


def grow_tree(
    X,
    Y,
    h=None,
    *,
    lam=0.0,
    max_features=None,
    max_depth=None,
    max_leaf_nodes=None,
    min_samples_leaf=1,
    rng=None,
) -> Tree:
    """Grow one tree best-first.

    Nodes are expanded in order of decreasing gain until no split improves
    the score or ``max_leaf_nodes`` leaves exist. ``max_features`` columns
    are sampled per node without replacement (all columns when None).
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, p = X.shape
    h = np.ones(n) if h is None else np.asarray(h, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)
    k_feat = p if max_features is None else max(1, min(p, int(max_features)))
    cap = np.inf if max_leaf_nodes is None else int(max_leaf_nodes)
    if cap < 1:
        raise ValueError("max_leaf_nodes must be >= 1")

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(Y[idx].sum(axis=0) / (h[idx].sum() + lam))
        return len(feature) - 1

    tie = itertools.count()
    heap = []

    def consider(node, idx, depth):
        if max_depth is not None and depth >= max_depth:
            return
        Yi = Y[idx]
        if len(idx) < 2 or np.all(Yi == Yi[0]):
            return
        cols = np.arange(p) if k_feat == p else np.sort(rng.choice(p, k_feat, replace=False))
        found = _best_split(X[np.ix_(idx, cols)], Yi, h[idx], lam, min_samples_leaf)
        if found is None:
            return
        gain, col, thr = found
        tol = 1e-12 * float((Yi ** 2).sum() / (h[idx].min() + lam + 1e-300))
        if gain <= tol:
            return
        heapq.heappush(heap, (-gain, next(tie), node, idx, depth, int(cols[col]), thr))

    root_idx = np.arange(n)
    consider(new_node(root_idx), root_idx, 0)
    leaves = 1
    while heap and leaves < cap:
        _, _, node, idx, depth, f, thr = heapq.heappop(heap)
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        leaves += 1
        consider(left[node], li, depth + 1)
        consider(right[node], ri, depth + 1)

    return Tree(
        np.array(feature, dtype=np.intp), np.array(threshold, dtype=float),
        np.array(left, dtype=np.intp), np.array(right, dtype=np.intp),
        np.array(value, dtype=float).reshape(len(feature), Y.shape[1]),
    )
