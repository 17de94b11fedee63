"""Soft-voting classifiers and LLM-assisted regression pipelines."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError, MissingProvider, SchemaMismatch
from .features import FeatureMatrix, FeatureVector, Scaler
from .llm import BEST_PROVIDER, HYBRID_PROVIDERS, LlmPrediction
from .models import forest_fit, gbt_fit, mlp_fit
from .resampling import AugmentConfig, gaussian_augment

# Classifier families by their short names; "xgb" is the boosted-tree family.
FAMILY_ALIASES = {"rf": "rf", "forest": "rf", "xgb": "gbt", "gbt": "gbt", "mlp": "mlp"}
CLASSIFIER_PRESETS = {
    "rf+mlp": ("rf", "mlp"),
    "rf+xgb": ("rf", "gbt"),
    "xgb+mlp": ("gbt", "mlp"),
    "rf+xgb+mlp": ("rf", "gbt", "mlp"),
}


# ---------------------------------------------------------------------------
# soft voting
# ---------------------------------------------------------------------------


@dataclass
class SoftVoteEnsemble:
    members: tuple

    kind = "soft_vote"
    task = "classification"

    def __post_init__(self):
        self.members = tuple(self.members)
        if not self.members:
            raise InputError("an ensemble needs at least one member")
        widths = {m.n_features for m in self.members}
        if len(widths) != 1:
            raise SchemaMismatch(f"members were trained on different feature counts {sorted(widths)}")
        if any(m.task != "classification" for m in self.members):
            raise InputError("soft voting needs classifier members")

    @property
    def n_features(self):
        return self.members[0].n_features

    def predict_proba(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise SchemaMismatch(f"ensemble expects {self.n_features} features, got {X.shape[1]}")
        return np.mean([m.predict_proba(X) for m in self.members], axis=0)

    def predict(self, X):
        p = self.predict_proba(X)
        return (p[:, 1] > p[:, 0]).astype(int)

    def to_dict(self):
        from .models.io import model_to_dict

        return {"hyperparameters": {"n_members": len(self.members)},
                "parameters": {"members": [model_to_dict(m) for m in self.members]}}

    @classmethod
    def from_dict(cls, d):
        from .models.io import model_from_dict

        return cls(tuple(model_from_dict(m) for m in d["parameters"]["members"]))


def soft_vote_predict(ensemble: SoftVoteEnsemble, X):
    """``(labels, probabilities)``; probabilities are the unweighted member mean, ties go to class 0."""
    p = ensemble.predict_proba(X)
    return (p[:, 1] > p[:, 0]).astype(int), p


def parse_members(spec) -> tuple[str, ...]:
    """``"rf+xgb+mlp"`` or a sequence of family names to canonical family names."""
    parts = spec.split("+") if isinstance(spec, str) else list(spec)
    try:
        fams = tuple(FAMILY_ALIASES[p.strip().lower()] for p in parts)
    except KeyError as exc:
        raise InputError(f"unknown classifier family {exc.args[0]!r}; use rf, xgb/gbt or mlp") from None
    if not fams:
        raise InputError("no classifier families given")
    return fams


def fit_classifier(family, X, y, seed=0, params: Mapping | None = None):
    params = dict(params or {})
    fam = FAMILY_ALIASES.get(family, family)
    if fam == "rf":
        return forest_fit(X, y, task="classification", seed=seed, **params)
    if fam == "gbt":
        return gbt_fit(X, y, task="classification", seed=seed, **params)
    if fam == "mlp":
        return mlp_fit(X, y, task="classification", seed=seed, **params)
    raise InputError(f"unknown classifier family {family!r}")


def fit_soft_vote(X, y, members="rf+xgb+mlp", seed=0, member_params: Mapping | None = None):
    """Fit one classifier per family and combine them by soft voting.

    ``member_params`` maps a family name to its keyword arguments. Member
    ``i`` is seeded from ``(seed, i)``.
    """
    fams = parse_members(members)
    member_params = {FAMILY_ALIASES.get(k, k): v for k, v in (member_params or {}).items()}
    fitted = []
    for i, fam in enumerate(fams):
        s = int(np.random.SeedSequence([int(seed) & (2**64 - 1), i]).generate_state(1)[0])
        fitted.append(fit_classifier(fam, X, y, s, member_params.get(fam)))
    return SoftVoteEnsemble(tuple(fitted))


# ---------------------------------------------------------------------------
# LLM hybrids
# ---------------------------------------------------------------------------


class HybridMode(enum.Enum):
    GlyBase = "gly_base"
    GlyLlm = "gly_llm"
    GlyHybrid = "gly_hybrid"
    GlyHybridV2 = "gly_hybrid_v2"
    GlyMax = "gly_max"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("-", "_")
        for m in cls:
            if key in (m.value, m.name.lower()):
                return m
        raise InputError(f"unknown hybrid mode {text!r}; choose from {[m.value for m in cls]}")


def llm_providers_for(mode, providers=HYBRID_PROVIDERS, best=BEST_PROVIDER) -> tuple[str, ...]:
    """Provider columns a mode appends, in order."""
    mode = HybridMode.parse(mode)
    if mode is HybridMode.GlyBase:
        return ()
    if mode is HybridMode.GlyHybrid:
        return tuple(providers)
    return (best,)


def extend_matrix_with_llm(X, names, llm_columns: Mapping[str, np.ndarray], mode,
                           providers=HYBRID_PROVIDERS, best=BEST_PROVIDER):
    """Append ``llm_<provider>`` columns; returns ``(X_ext, names_ext)``.

    The LLM-only mode keeps nothing but the designated provider's column.
    """
    mode = HybridMode.parse(mode)
    X = np.asarray(X, dtype=float)
    wanted = llm_providers_for(mode, providers, best)
    missing = [p for p in wanted if p not in llm_columns]
    if missing:
        raise MissingProvider(f"{mode.value} needs predictions from {missing}")
    if mode is HybridMode.GlyHybrid and len(set(wanted)) != 6:
        raise MissingProvider(f"gly_hybrid needs 6 distinct providers, got {len(set(wanted))}")
    cols = [np.asarray(llm_columns[p], dtype=float).reshape(-1) for p in wanted]
    if any(len(c) != X.shape[0] for c in cols):
        raise InputError("LLM prediction columns do not align with the feature rows")
    extra = tuple(f"llm_{p}" for p in wanted)
    if mode is HybridMode.GlyLlm:
        return np.column_stack(cols), extra
    return np.column_stack([X, *cols]) if cols else X.copy(), tuple(names) + extra


def extend_features_with_llm(base: FeatureVector, predictions: Sequence[LlmPrediction], mode,
                             providers=HYBRID_PROVIDERS, best=BEST_PROVIDER) -> FeatureVector:
    """Append LLM predictions to one feature vector as trailing ``llm_<provider>`` features."""
    mode = HybridMode.parse(mode)
    if mode is HybridMode.GlyBase:
        return base
    cols = {p.provider_id: np.array([p.value]) for p in predictions}
    X, names = extend_matrix_with_llm(base.as_array()[None, :], base.names, cols, mode, providers, best)
    return FeatureVector(base.set_kind, names, tuple(float(v) for v in X[0]))


@dataclass
class HybridResult:
    mode: HybridMode
    model: object | None
    predictions: np.ndarray
    feature_names: tuple[str, ...]
    n_train_rows: int
    scaler: Scaler | None = None
    train_synthetic: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))


def fit_regressor(backbone, X, y, seed=0, params: Mapping | None = None):
    params = dict(params or {})
    b = FAMILY_ALIASES.get(str(backbone).lower(), str(backbone).lower())
    if b == "rf":
        return forest_fit(X, y, task="regression", seed=seed, **params)
    if b == "gbt":
        return gbt_fit(X, y, task="regression", seed=seed, **params)
    raise InputError(f"hybrid backbone must be rf/forest or gbt/xgb, got {backbone!r}")


def run_hybrid_regression(mode, dataset: FeatureMatrix, llm_columns: Mapping[str, np.ndarray],
                          train_idx, test_idx, backbone="rf", target="auc",
                          augment_cfg: AugmentConfig | None = None, seed=0,
                          backbone_params: Mapping | None = None,
                          providers=HYBRID_PROVIDERS, best=BEST_PROVIDER) -> HybridResult:
    """Fit and apply one of the five regression pipelines.

    ``llm_columns`` maps provider id to predictions aligned with the rows of
    ``dataset``. The base pipeline fits the backbone on raw features; the
    hybrid pipelines z-score the extended features with a scaler fitted on
    the training rows; the augmented pipeline then adds Gaussian copies of
    the training rows. The LLM-only pipeline returns ``best``'s predictions.
    """
    mode = HybridMode.parse(mode)
    train_idx = np.asarray(train_idx, dtype=int)
    test_idx = np.asarray(test_idx, dtype=int)
    y = np.asarray(dataset.target(target), dtype=float)
    if mode is HybridMode.GlyLlm:
        if best not in llm_columns:
            raise MissingProvider(f"gly_llm needs predictions from {best!r}")
        preds = np.asarray(llm_columns[best], dtype=float)[test_idx]
        return HybridResult(mode, None, preds, (f"llm_{best}",), 0)
    if mode is HybridMode.GlyBase:
        Xtr, Xte = dataset.X[train_idx], dataset.X[test_idx]
        model = fit_regressor(backbone, Xtr, y[train_idx], seed, backbone_params)
        return HybridResult(mode, model, model.predict(Xte), dataset.names, len(train_idx),
                            train_synthetic=np.zeros(len(train_idx), bool))
    X_ext, names = extend_matrix_with_llm(dataset.X, dataset.names, llm_columns, mode, providers, best)
    scaler = Scaler.fit(X_ext[train_idx])
    Xtr = scaler.transform(X_ext[train_idx])
    Xte = scaler.transform(X_ext[test_idx])
    ytr = y[train_idx]
    synthetic = np.zeros(len(train_idx), bool)
    if mode is HybridMode.GlyMax:
        cfg = augment_cfg or AugmentConfig(seed=seed)
        Xtr, ytr, synthetic = gaussian_augment(Xtr, ytr, cfg)
    model = fit_regressor(backbone, Xtr, ytr, seed, backbone_params)
    return HybridResult(mode, model, model.predict(Xte), names, Xtr.shape[0], scaler, synthetic)
