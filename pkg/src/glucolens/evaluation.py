"""Splits, metrics and repeated-seed experiments.

An experiment re-splits the data for every repetition seed, fits the chosen
model on the training split only (z-scoring and any resampling included),
scores the untouched test split and aggregates metrics over seeds. Each
fold is audited: training rows carry their source row index (``-1`` for
synthetic rows) and the run fails if a test row or a synthetic row could
have leaked across the split.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Mapping, Sequence

import numpy as np

from .ensemble import (
    CLASSIFIER_PRESETS,
    FAMILY_ALIASES,
    HybridMode,
    fit_classifier,
    fit_soft_vote,
    run_hybrid_regression,
)
from .errors import (
    ComputationError,
    EmptyData,
    ExperimentError,
    GlucoLensError,
    InputError,
    InsufficientClassCount,
    NonPositiveTruth,
    ZeroMeanTarget,
)
from .features import FeatureMatrix, Scaler
from .models import mlp_fit, ridge_fit
from .resampling import AdasynConfig, AugmentConfig, adasyn_balance, largest_remainder
from .synth import SynthCohortSpec, synth_cohort

__all__ = [
    "SplitSpec", "split_indices", "split", "nrmse", "classification_metrics",
    "tolerance_curve", "ExperimentConfig", "MetricsReport", "run_experiment",
    "run_sweep", "TRAINING_SIZE_SPLITS", "SynthCohortSpec", "synth_cohort", "repetition_seeds",
]

DEFAULT_TOLERANCES = (5.0, 10.0, 15.0, 20.0)
REGRESSION_TARGETS = ("auc", "iauc", "max_bgl")

# Training-size sweep: label -> split settings. 87/13 is the 10 + 10 balanced test set.
TRAINING_SIZE_SPLITS = (
    ("70/30", {"kind": "fraction", "test_fraction": 0.30}),
    ("80/20", {"kind": "fraction", "test_fraction": 0.20}),
    ("87/13", {"kind": "balanced_count", "n_per_class": 10}),
    ("90/10", {"kind": "fraction", "test_fraction": 0.10}),
    ("95/5", {"kind": "fraction", "test_fraction": 0.05}),
    ("99/1", {"kind": "fraction", "test_fraction": 0.01}),
)


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    kind: str = "fraction"
    test_fraction: float | None = 0.2
    n_per_class: int | None = None
    seed: int = 0
    stratify: bool = True

    def __post_init__(self):
        if self.kind == "fraction":
            if self.n_per_class is not None or self.test_fraction is None:
                raise InputError("fraction splits take test_fraction only")
            if not (0.0 < self.test_fraction < 1.0):
                raise InputError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        elif self.kind == "balanced_count":
            if self.test_fraction is not None or self.n_per_class is None:
                raise InputError("balanced_count splits take n_per_class only")
            if int(self.n_per_class) != self.n_per_class or self.n_per_class < 1:
                raise InputError("n_per_class must be a positive integer")
        else:
            raise InputError(f"split kind must be 'fraction' or 'balanced_count', got {self.kind!r}")

    @classmethod
    def from_dict(cls, d: Mapping, seed=0):
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise InputError(f"unknown split keys {sorted(unknown)}")
        d.setdefault("seed", seed)
        if d.get("kind") == "balanced_count":
            d.setdefault("test_fraction", None)
        return cls(**d)


def split_indices(n, spec: SplitSpec, labels=None):
    """Sorted ``(train_idx, test_idx)``.

    Fraction splits put ``round(test_fraction * n)`` rows (at least one on
    each side) in the test set, stratified by ``labels`` when given.
    Balanced-count splits put exactly ``n_per_class`` rows of each label in
    the test set.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed) & (2**64 - 1), 0x5A11]))
    if labels is not None:
        labels = np.asarray(labels).astype(int)
        if len(labels) != n:
            raise InputError("labels must have one entry per row")
    if spec.kind == "balanced_count":
        if labels is None:
            raise InputError("balanced_count splits need class labels")
        test = []
        for c in (0, 1):
            idx = np.flatnonzero(labels == c)
            if len(idx) < spec.n_per_class:
                raise InsufficientClassCount(
                    f"class {c} has {len(idx)} rows, need {spec.n_per_class} for the test set")
            test.append(rng.permutation(idx)[: spec.n_per_class])
        test = np.sort(np.concatenate(test))
    else:
        if n < 2:
            raise EmptyData("need at least 2 rows to split")
        n_test = min(max(int(math.floor(spec.test_fraction * n + 0.5)), 1), n - 1)
        if labels is not None and spec.stratify:
            classes, counts = np.unique(labels, return_counts=True)
            alloc = largest_remainder(counts / counts.sum(), n_test)
            test = np.sort(np.concatenate([
                rng.permutation(np.flatnonzero(labels == c))[:a] for c, a in zip(classes, alloc)
            ]))
        else:
            test = np.sort(rng.permutation(n)[:n_test])
    train = np.setdiff1d(np.arange(n), test)
    return train, test


def split(dataset: FeatureMatrix, spec: SplitSpec, target=None):
    """``(train, test)`` feature matrices; ``target`` names the label column for stratification."""
    labels = None if target is None else dataset.target(target)
    tr, te = split_indices(len(dataset), spec, labels)
    return dataset.subset(tr), dataset.subset(te)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def _pair(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=float).reshape(-1)
    if len(y_true) == 0 or len(y_true) != len(y_pred):
        raise InputError("y_true and y_pred must be non-empty and equally long")
    return y_true, y_pred


def nrmse(y_true, y_pred, normalizer="mean") -> float:
    """RMSE divided by the mean (default) or the range of the true values."""
    y_true, y_pred = _pair(y_true, y_pred)
    rmse = math.sqrt(float(np.mean((y_true - y_pred) ** 2)))
    if normalizer == "mean":
        scale = float(np.mean(y_true))
        if not scale > 0:
            raise ZeroMeanTarget(f"mean of true values is {scale}")
    elif normalizer == "range":
        scale = float(np.ptp(y_true))
        if not scale > 0:
            raise ZeroMeanTarget("true values have zero range")
    else:
        raise InputError(f"normalizer must be 'mean' or 'range', got {normalizer!r}")
    return rmse / scale


def classification_metrics(y_true, y_pred) -> dict[str, float]:
    """Accuracy and macro-averaged precision, recall and F1 over classes 0 and 1.

    A per-class precision, recall or F1 whose denominator is zero counts as 0.
    """
    t = np.asarray(y_true).astype(int).reshape(-1)
    p = np.asarray(y_pred).astype(int).reshape(-1)
    if len(t) == 0 or len(t) != len(p):
        raise InputError("y_true and y_pred must be non-empty and equally long")
    prec, rec, f1 = [], [], []
    for c in (0, 1):
        tp = int(np.sum((p == c) & (t == c)))
        fp = int(np.sum((p == c) & (t != c)))
        fn = int(np.sum((p != c) & (t == c)))
        pc = tp / (tp + fp) if tp + fp else 0.0
        rc = tp / (tp + fn) if tp + fn else 0.0
        prec.append(pc)
        rec.append(rc)
        f1.append(2 * pc * rc / (pc + rc) if pc + rc else 0.0)
    return {
        "accuracy": float(np.mean(t == p)),
        "precision": float(np.mean(prec)),
        "recall": float(np.mean(rec)),
        "f1": float(np.mean(f1)),
    }


def tolerance_curve(y_true, y_pred, thresholds: Sequence[float] = DEFAULT_TOLERANCES) -> np.ndarray:
    """Fraction of cases whose relative error is below each threshold (in percent)."""
    y_true, y_pred = _pair(y_true, y_pred)
    if np.any(y_true <= 0):
        raise NonPositiveTruth("tolerance curves need strictly positive true values")
    rel = np.abs(y_pred - y_true) / y_true
    return np.array([float(np.mean(rel < t / 100.0)) for t in thresholds])


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def repetition_seeds(seed, n):
    """Per-repetition seeds expanded from one global seed."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1))
    return [int(c.generate_state(1)[0]) for c in ss.spawn(n)]


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "regression"
    target: str = "auc"
    model: str = "rf"
    model_params: dict = field(default_factory=dict)
    member_params: dict = field(default_factory=dict)
    split: dict = field(default_factory=lambda: {"kind": "fraction", "test_fraction": 0.2})
    n_seeds: int = 100
    seed: int = 0
    resplit_per_seed: bool = True
    balance: bool = True
    adasyn: dict = field(default_factory=lambda: {"k_neighbors": 5, "beta": 1.0})
    hybrid_mode: str = "gly_base"
    llm_provider: str = "claude_opus4"
    augment: dict = field(default_factory=lambda: {"sigma": 0.05, "factor": 1})
    tolerances: tuple = DEFAULT_TOLERANCES
    normalizer: str = "mean"
    label: str = ""

    def __post_init__(self):
        if self.task not in ("regression", "classification"):
            raise InputError(f"task must be regression or classification, got {self.task!r}")
        if self.task == "regression" and self.target not in REGRESSION_TARGETS:
            raise InputError(f"regression target must be one of {REGRESSION_TARGETS}")
        if self.task == "classification" and self.target != "hyper":
            raise InputError("classification target must be 'hyper'")
        if self.n_seeds < 1:
            raise InputError("n_seeds must be >= 1")
        HybridMode.parse(self.hybrid_mode)
        _model_families(self.model, self.task)
        SplitSpec.from_dict(self.split)
        object.__setattr__(self, "tolerances", tuple(float(t) for t in self.tolerances))

    @classmethod
    def from_dict(cls, d: Mapping):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise InputError(f"unknown experiment keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["tolerances"] = list(self.tolerances)
        return d

    def fingerprint(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)


def _model_families(model, task):
    key = str(model).lower()
    if key == "mean":
        return ("mean",)
    if task == "classification":
        if key in CLASSIFIER_PRESETS:
            return CLASSIFIER_PRESETS[key]
        parts = key.split("+")
        if all(p in FAMILY_ALIASES for p in parts):
            return tuple(FAMILY_ALIASES[p] for p in parts)
        raise InputError(f"unknown classifier {model!r}")
    if key in ("ridge", "mlp") or key in ("rf", "forest", "gbt", "xgb"):
        return (FAMILY_ALIASES.get(key, key),)
    raise InputError(f"unknown regressor {model!r}")


def dataset_fingerprint(dataset: FeatureMatrix) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(list(dataset.names)).encode())
    h.update(np.ascontiguousarray(dataset.X).tobytes())
    for k in sorted(dataset.targets):
        h.update(k.encode())
        h.update(np.ascontiguousarray(dataset.targets[k], dtype=float).tobytes())
    return h.hexdigest()


def audit_fold(train_sources, test_sources):
    """Raise when a fold could leak: a test row in training or a synthetic row in test.

    ``train_sources``/``test_sources`` hold the source row index of each row
    fed to fitting/scoring, ``-1`` for synthetic rows.
    """
    train_sources = np.asarray(train_sources)
    test_sources = np.asarray(test_sources)
    synthetic_in_test = int(np.sum(test_sources < 0))
    overlap = int(np.intersect1d(train_sources[train_sources >= 0], test_sources).size)
    if synthetic_in_test or overlap:
        raise ComputationError(
            f"split leak: {synthetic_in_test} synthetic test rows, {overlap} test rows used in training")
    return {"synthetic_in_test": synthetic_in_test, "test_rows_in_train": overlap}


@dataclass
class MetricsReport:
    label: str
    task: str
    config: dict
    fingerprint: str
    dataset_sha256: str
    seeds: list[int]
    per_seed: list[dict]
    aggregate: dict
    audit: dict

    def metric(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.per_seed], dtype=float)

    def mean(self, name) -> float:
        return self.aggregate[name]["mean"]

    def as_dict(self):
        return {
            "label": self.label, "task": self.task, "config": self.config,
            "fingerprint": self.fingerprint, "dataset_sha256": self.dataset_sha256,
            "seeds": self.seeds, "per_seed": self.per_seed, "aggregate": self.aggregate,
            "audit": self.audit,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def to_text(self) -> str:
        head = self.label or self.config.get("model", "")
        lines = [
            f"experiment {head} ({self.task}, target {self.config['target']}, model {self.config['model']})",
            f"seed {self.config['seed']}, {len(self.seeds)} repetitions, fingerprint {self.fingerprint[:16]}",
            f"{'metric':<14}{'mean':>12}{'sd':>12}",
        ]
        for name in self.aggregate:
            a = self.aggregate[name]
            lines.append(f"{name:<14}{a['mean']:>12.4f}{a['sd']:>12.4f}")
        lines.append(
            "audit: {synthetic_in_test} synthetic rows in test folds, {test_rows_in_train} test rows "
            "in training, {synthetic_train_rows} synthetic training rows".format(**self.audit))
        return "\n".join(lines) + "\n"


def _aggregate(per_seed, names):
    out = {}
    for n in names:
        v = np.array([r[n] for r in per_seed], dtype=float)
        out[n] = {"mean": float(v.mean()), "sd": float(v.std(ddof=1)) if len(v) > 1 else 0.0}
    return out


def _fit_regressor_scaled(family, Xtr, ytr, Xte, seed, params):
    scaler = Scaler.fit(Xtr)
    Ztr, Zte = scaler.transform(Xtr), scaler.transform(Xte)
    if family == "ridge":
        return ridge_fit(Ztr, ytr, **params).predict(Zte)
    return mlp_fit(Ztr, ytr, task="regression", seed=seed, **params).predict(Zte)


def _regression_fold(dataset, cfg, tr, te, seed, llm_columns):
    y = dataset.target(cfg.target).astype(float)
    fam = _model_families(cfg.model, cfg.task)[0]
    mode = HybridMode.parse(cfg.hybrid_mode)
    sources = tr
    if fam == "mean":
        pred = np.full(len(te), float(y[tr].mean()))
    elif fam in ("rf", "gbt"):
        aug = AugmentConfig(seed=seed, **cfg.augment)
        res = run_hybrid_regression(
            mode, dataset, llm_columns or {}, tr, te, backbone=fam, target=cfg.target,
            augment_cfg=aug, seed=seed, backbone_params=cfg.model_params, best=cfg.llm_provider,
        )
        pred = res.predictions
        if mode is HybridMode.GlyMax:
            sources = np.r_[tr, np.full(int(res.train_synthetic.sum()), -1)]
    else:
        if mode is not HybridMode.GlyBase:
            raise InputError("LLM hybrids need the rf or gbt backbone")
        pred = _fit_regressor_scaled(fam, dataset.X[tr], y[tr], dataset.X[te], seed, cfg.model_params)
    yt = y[te]
    row = {"nrmse": nrmse(yt, pred, cfg.normalizer), "rmse": math.sqrt(float(np.mean((yt - pred) ** 2)))}
    for t, f in zip(cfg.tolerances, tolerance_curve(yt, pred, cfg.tolerances)):
        row[f"within_{t:g}pct"] = float(f)
    return row, sources


def _classification_fold(dataset, cfg, tr, te, seed):
    y = dataset.target("hyper").astype(int)
    scaler = Scaler.fit(dataset.X[tr])
    Xtr, ytr = scaler.transform(dataset.X[tr]), y[tr]
    Xte = scaler.transform(dataset.X[te])
    sources = tr
    if cfg.balance:
        Xtr, ytr, synthetic = adasyn_balance(Xtr, ytr, AdasynConfig(seed=seed, **cfg.adasyn))
        sources = np.r_[tr, np.full(int(synthetic.sum()), -1)]
    fams = _model_families(cfg.model, cfg.task)
    if fams == ("mean",):
        pred = np.full(len(te), int(np.mean(ytr) > 0.5))
    elif len(fams) == 1:
        pred = fit_classifier(fams[0], Xtr, ytr, seed, cfg.member_params.get(fams[0], cfg.model_params)).predict(Xte)
    else:
        pred = fit_soft_vote(Xtr, ytr, fams, seed, cfg.member_params).predict(Xte)
    return classification_metrics(y[te], pred), sources


def run_experiment(dataset: FeatureMatrix, config: ExperimentConfig,
                   llm_columns: Mapping[str, np.ndarray] | None = None) -> MetricsReport:
    """Repeat split, fit and score for ``config.n_seeds`` seeds and aggregate."""
    if len(dataset) < 2:
        raise EmptyData("experiment needs at least 2 rows")
    seeds = repetition_seeds(config.seed, config.n_seeds)
    labels = dataset.target("hyper") if config.task == "classification" else None
    per_seed, audit = [], {"synthetic_in_test": 0, "test_rows_in_train": 0, "synthetic_train_rows": 0}
    for i, s in enumerate(seeds):
        try:
            split_seed = s if config.resplit_per_seed else config.seed
            spec = SplitSpec.from_dict(config.split, seed=split_seed)
            tr, te = split_indices(len(dataset), spec, labels)
            if config.task == "regression":
                row, sources = _regression_fold(dataset, config, tr, te, s, llm_columns)
            else:
                row, sources = _classification_fold(dataset, config, tr, te, s)
            fold = audit_fold(sources, te)
        except GlucoLensError as exc:
            raise ExperimentError(i, s, exc) from exc
        for k, v in fold.items():
            audit[k] += v
        audit["synthetic_train_rows"] += int(np.sum(np.asarray(sources) < 0))
        per_seed.append({"index": i, "seed": s, "n_train": int(len(sources)), "n_test": int(len(te)), **row})
    metric_names = [k for k in per_seed[0] if k not in ("index", "seed", "n_train", "n_test")]
    return MetricsReport(
        config.label, config.task, config.to_dict(), config.fingerprint(), dataset_fingerprint(dataset),
        seeds, per_seed, _aggregate(per_seed, metric_names), audit,
    )


def run_sweep(dataset: FeatureMatrix, config: ExperimentConfig, splits=TRAINING_SIZE_SPLITS,
              llm_columns=None) -> list[MetricsReport]:
    """One report per training-size split, all other settings shared."""
    return [
        run_experiment(dataset, config.replace(split=dict(spec), label=label), llm_columns)
        for label, spec in splits
    ]
