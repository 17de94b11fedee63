"""Diverse counterfactual explanations for binary classifiers.

The search is model-agnostic: it only calls ``predict_proba`` and labels a
row 1 when its class-1 probability is strictly larger (ties go to 0). Candidates are generated by a small evolutionary loop (random
restarts from the original instance, crossover and single-feature
mutation), ranked by validity and MAD-scaled L1 proximity. Every valid
candidate is then offered, in evaluation order, to the returned set, which
keeps the ``k`` members minimizing

    mean(w_p * proximity) - w_d * mean pairwise distance

with an unfilled slot costing ``UNFILLED_SLOT_COST``. A member only enters
when it lowers that loss, so the best loss never increases as the
evaluation budget grows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NoCounterfactualFound
from .features import FeatureVector

DEFAULT_IMMUTABLE = frozenset({"bmi", "day_of_week"})
DEFAULT_INTEGER = frozenset({"day_of_week", "work_from_home"})
MAD_FLOOR = 1e-6
UNFILLED_SLOT_COST = 1e6
LABEL_NAMES = {0: "normal", 1: "hyperglycemic"}


@dataclass(frozen=True)
class CfConstraints:
    names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    mad: np.ndarray
    immutable: frozenset = DEFAULT_IMMUTABLE
    integer: frozenset = DEFAULT_INTEGER

    def __post_init__(self):
        p = len(self.names)
        for arr in (self.lower, self.upper, self.mad):
            if np.shape(arr) != (p,):
                raise InputError("constraint arrays must have one entry per feature")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise InputError("feature ranges must be finite")
        if np.any(self.lower > self.upper):
            raise InputError("feature range lower bound exceeds upper bound")
        object.__setattr__(self, "immutable", frozenset(self.immutable) & set(self.names))
        object.__setattr__(self, "integer", frozenset(self.integer) & set(self.names))

    @classmethod
    def from_training(cls, X, names, immutable=DEFAULT_IMMUTABLE, integer=DEFAULT_INTEGER):
        """Ranges are training min/max; MAD is the median absolute deviation.

        MAD is floored at ``MAD_FLOOR``, or at one lattice step for integer
        features, so flipping a mostly-constant 0/1 feature is not priced
        at a million MAD units.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] != len(names):
            raise InputError("training matrix does not match the feature names")
        med = np.median(X, axis=0)
        floor = np.array([1.0 if n in integer else MAD_FLOOR for n in names])
        mad = np.maximum(np.median(np.abs(X - med), axis=0), floor)
        return cls(tuple(names), X.min(axis=0), X.max(axis=0), mad, frozenset(immutable), frozenset(integer))

    @property
    def mutable_mask(self):
        return np.array([n not in self.immutable for n in self.names])

    @property
    def integer_mask(self):
        return np.array([n in self.integer for n in self.names])


@dataclass
class CounterfactualSet:
    names: tuple[str, ...]
    original: np.ndarray
    original_label: int
    target_label: int
    counterfactuals: np.ndarray
    labels: np.ndarray
    status: str
    best_loss: float
    evaluations: int
    seed: int = 0
    proximities: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return len(self.counterfactuals)

    def diffs(self):
        """Per counterfactual, ``[(name, original, new), ...]`` for changed features only."""
        out = []
        for cf in self.counterfactuals:
            out.append([(n, float(a), float(b)) for n, a, b in zip(self.names, self.original, cf) if a != b])
        return out

    def as_dict(self):
        return {
            "original": {n: float(v) for n, v in zip(self.names, self.original)},
            "original_label": int(self.original_label),
            "target_label": int(self.target_label),
            "status": self.status,
            "best_loss": float(self.best_loss),
            "evaluations": int(self.evaluations),
            "seed": int(self.seed),
            "counterfactuals": [
                {"label": int(lab), "changes": {n: {"from": a, "to": b} for n, a, b in d}}
                for lab, d in zip(self.labels, self.diffs())
            ],
        }

    def to_json(self):
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)


def _fmt(name, v, integer):
    return str(int(round(v))) if name in integer else f"{v:.2f}"


def diff_report(cf_set: CounterfactualSet, integer=DEFAULT_INTEGER) -> str:
    """Text report listing only changed features, one block per option."""
    src, dst = cf_set.original_label, cf_set.target_label
    lines = [
        f"Original prediction: {LABEL_NAMES.get(src, src)} ({src}); "
        f"target: {LABEL_NAMES.get(dst, dst)} ({dst}); status: {cf_set.status}",
    ]
    for i, (label, diff) in enumerate(zip(cf_set.labels, cf_set.diffs()), start=1):
        lines.append(f"Option {i} (predicted {int(label)}):")
        for name, a, b in diff:
            fa, fb = _fmt(name, a, integer), _fmt(name, b, integer)
            if fa == fb:
                # sub-display-precision move; show enough digits to see it
                fa, fb = f"{a:.6g}", f"{b:.6g}"
            lines.append(f"  {name}: {fa} -> {fb}")
    return "\n".join(lines) + "\n"


class _SetSelector:
    """Incrementally maintained best set of up to ``k`` counterfactuals.

    Candidates arrive in MAD-scaled coordinates of the mutable features, so
    proximity-distance is a plain L1 norm; pairwise distances are cached.
    """

    def __init__(self, k, w_p, w_d):
        self.k, self.w_p, self.w_d = k, w_p, w_d
        self.members: list[np.ndarray] = []
        self.scaled: list[np.ndarray] = []
        self.prox: list[float] = []
        self.D = np.zeros((0, 0))
        self.loss = UNFILLED_SLOT_COST

    def _loss(self, prox_sum, m, pair_sum):
        n_pairs = m * (m - 1) // 2
        div = pair_sum / n_pairs if n_pairs else 0.0
        return (self.w_p * prox_sum + (self.k - m) * UNFILLED_SLOT_COST) / self.k - self.w_d * div

    def offer(self, c, z, prox):
        m = len(self.members)
        d = np.abs(np.array(self.scaled) - z).sum(axis=1) if m else np.zeros(0)
        if np.any(d == 0.0):
            return
        prox_sum = sum(self.prox)
        pair_sum = float(self.D.sum()) / 2.0
        best_loss, best_slot = self.loss, None
        if m < self.k:
            loss = self._loss(prox_sum + prox, m + 1, pair_sum + d.sum())
            if loss < best_loss:
                best_loss, best_slot = loss, m
        for i in range(m):
            loss = self._loss(prox_sum - self.prox[i] + prox, m,
                              pair_sum - self.D[i].sum() + d.sum() - d[i])
            if loss < best_loss:
                best_loss, best_slot = loss, i
        if best_slot is None:
            return
        self.loss = best_loss
        if best_slot == m:
            self.members.append(c)
            self.scaled.append(z)
            self.prox.append(prox)
            D = np.zeros((m + 1, m + 1))
            D[:m, :m] = self.D
            D[m, :m] = D[:m, m] = d
            self.D = D
        else:
            i = best_slot
            self.members[i], self.scaled[i], self.prox[i] = c, z, prox
            d = d.copy()
            d[i] = 0.0
            self.D[i, :] = self.D[:, i] = d


def generate(
    model,
    instance,
    target_label,
    k=3,
    constraints: CfConstraints | None = None,
    budget=20_000,
    seed=0,
    proximity_weight=0.5,
    diversity_weight=1.0,
    population=50,
) -> CounterfactualSet:
    """Search for ``k`` diverse counterfactuals with ``model(cf) == target_label``.

    ``budget`` caps the number of candidate rows scored by the model.
    Mutable features stay within the constraint ranges, widened to include
    the instance itself; integer features stay on integers; immutable
    features are never touched.
    """
    if k < 1:
        raise InputError("k must be >= 1")
    if budget < 1:
        raise InputError("budget must be >= 1")
    if target_label not in (0, 1):
        raise InputError("target_label must be 0 or 1")
    if isinstance(instance, FeatureVector):
        names, x0 = instance.names, instance.as_array()
    else:
        x0 = np.asarray(instance, dtype=float).reshape(-1)
        names = constraints.names if constraints is not None else tuple(f"x{i}" for i in range(len(x0)))
    if constraints is None:
        raise InputError("constraints are required (see CfConstraints.from_training)")
    if tuple(constraints.names) != tuple(names):
        raise InputError("constraints and instance use different feature names")
    mut = constraints.mutable_mask
    if not mut.any():
        raise NoCounterfactualFound("no mutable features")
    integer = constraints.integer_mask
    lo = np.minimum(constraints.lower, x0)
    hi = np.maximum(constraints.upper, x0)
    mad = constraints.mad
    step = np.where(mad > MAD_FLOOR, mad, (hi - lo) / 4.0)
    mut_idx = np.flatnonzero(mut)
    z0 = x0[mut] / mad[mut]
    p = len(x0)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0xCF]))
    p0 = model.predict_proba(x0[None, :])[0]
    original_label = int(p0[1] > p0[0])

    def repair(C):
        C[:, ~mut] = x0[~mut]
        C = np.clip(C, lo, hi)
        C[:, integer] = np.clip(np.round(C[:, integer]), np.ceil(lo[integer]), np.floor(hi[integer]))
        return C

    def restarts(n):
        C = np.tile(x0, (n, 1))
        for r in range(n):
            m = rng.integers(1, min(3, len(mut_idx)) + 1)
            for j in rng.choice(mut_idx, m, replace=False):
                if rng.random() < 0.5:
                    C[r, j] = rng.uniform(lo[j], hi[j])
                else:
                    C[r, j] = x0[j] + rng.normal(0.0, 2.0 * step[j])
        return repair(C)

    def breed(P, fit, n):
        a, b = rng.integers(0, len(P), (n, 2)), rng.integers(0, len(P), (n, 2))
        pa = np.where(fit[a[:, 0]] <= fit[a[:, 1]], a[:, 0], a[:, 1])
        pb = np.where(fit[b[:, 0]] <= fit[b[:, 1]], b[:, 0], b[:, 1])
        C = np.where(rng.random((n, p)) < 0.5, P[pa], P[pb])
        j = rng.choice(mut_idx, n)
        move = rng.integers(0, 3, n)
        rows = np.arange(n)
        jitter = C[rows, j] + rng.normal(0.0, 1.0, n) * rng.uniform(0.1, 1.5, n) * step[j]
        fresh = rng.uniform(lo[j], hi[j])
        C[rows, j] = np.select([move == 0, move == 1], [x0[j], jitter], fresh)
        return repair(C)

    selector = _SetSelector(k, proximity_weight, diversity_weight)
    pop = np.empty((0, p))
    pop_fit = np.empty(0)
    seen = set()
    evals = 0
    proposals = restarts(population)
    while evals < budget:
        batch = proposals[: budget - evals]
        evals += len(batch)
        proba = model.predict_proba(batch)
        prob = proba[:, target_label]
        valid = (proba[:, 1] > proba[:, 0]).astype(int) == target_label
        Z = batch[:, mut] / mad[mut]
        prox = np.abs(Z - z0).sum(axis=1)
        fit = np.maximum(0.0, 0.5 - prob) + (~valid) + proximity_weight * prox
        for i in np.flatnonzero(valid & (prox > 0)):
            selector.offer(batch[i], Z[i], float(prox[i]))
        fresh = []
        for i, c in enumerate(batch):
            key = c.tobytes()
            if key not in seen:
                seen.add(key)
                fresh.append(i)
        pool = np.vstack([pop, batch[fresh]])
        pool_fit = np.concatenate([pop_fit, fit[fresh]])
        keep = np.argsort(pool_fit, kind="stable")[:population]
        pop, pop_fit = pool[keep], pool_fit[keep]
        if len(batch) < len(proposals):
            break
        proposals = breed(pop, pop_fit, population)

    if not selector.members:
        raise NoCounterfactualFound(f"no candidate reached label {target_label} within {evals} evaluations")
    order = np.argsort(selector.prox, kind="stable")
    C = np.array(selector.members)[order]
    return CounterfactualSet(
        tuple(names), x0, original_label, int(target_label), C, model.predict(C),
        "ok" if len(C) == k else "partial", float(selector.loss), evals, int(seed),
        np.array(selector.prox)[order],
    )
