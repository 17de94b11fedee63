import numpy as np
import pytest

from glucolens import errors
from glucolens.ensemble import (
    CLASSIFIER_PRESETS,
    HybridMode,
    SoftVoteEnsemble,
    extend_features_with_llm,
    fit_soft_vote,
    run_hybrid_regression,
    soft_vote_predict,
)
from glucolens.evaluation import nrmse, split_indices, SplitSpec
from glucolens.llm import HYBRID_PROVIDERS, LlmPrediction, default_mock_providers, predict_rows
from glucolens.models import forest_fit, gbt_fit, mlp_fit
from glucolens.models import io
from glucolens.resampling import AugmentConfig


class FixedProba:
    """Stub classifier returning the same probability row for every input."""

    task = "classification"
    n_features = 2

    def __init__(self, p1):
        self.p1 = p1

    def predict_proba(self, X):
        return np.tile([1 - self.p1, self.p1], (len(X), 1))


def test_soft_vote_mean_by_hand():
    ens = SoftVoteEnsemble((FixedProba(0.4), FixedProba(0.2), FixedProba(0.6)))
    labels, p = soft_vote_predict(ens, np.zeros((3, 2)))
    np.testing.assert_allclose(p, np.tile([0.6, 0.4], (3, 1)), atol=1e-12)
    assert (labels == 0).all()


def test_soft_vote_tie_goes_to_zero():
    labels, _ = soft_vote_predict(SoftVoteEnsemble((FixedProba(0.5),)), np.zeros((1, 2)))
    assert labels[0] == 0


@pytest.fixture(scope="module")
def members():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(80, 4))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    ms = (
        forest_fit(X, y, 10, task="classification", seed=1),
        gbt_fit(X, y, n_rounds=10, task="classification"),
        mlp_fit(X, y, 1, task="classification", epochs=30),
    )
    return X, y, ms


def test_soft_vote_exact_mean_and_sums(members):
    X, _, ms = members
    Q = np.random.default_rng(1).normal(size=(25, 4))
    p = SoftVoteEnsemble(ms).predict_proba(Q)
    expected = sum(m.predict_proba(Q) for m in ms) / 3
    assert np.max(np.abs(p - expected)) <= 1e-12
    assert np.max(np.abs(p.sum(axis=1) - 1)) <= 1e-12


def test_single_and_duplicated_members(members):
    X, _, ms = members
    for m in ms:
        assert SoftVoteEnsemble((m,)).predict_proba(X).tobytes() == m.predict_proba(X).tobytes()
    base = SoftVoteEnsemble(ms).predict_proba(X)
    np.testing.assert_allclose(SoftVoteEnsemble(ms + ms).predict_proba(X), base, atol=1e-12)
    np.testing.assert_allclose(SoftVoteEnsemble((ms[0],) * 3).predict_proba(X), ms[0].predict_proba(X), atol=1e-15)


def test_schema_mismatch(members):
    X, y, ms = members
    other = forest_fit(X[:, :3], y, 3, task="classification")
    with pytest.raises(errors.SchemaMismatch):
        SoftVoteEnsemble((ms[0], other))
    with pytest.raises(errors.SchemaMismatch):
        SoftVoteEnsemble(ms).predict(X[:, :3])


def test_presets_and_serialization(members):
    X, y, _ = members
    assert set(CLASSIFIER_PRESETS) == {"rf+mlp", "rf+xgb", "xgb+mlp", "rf+xgb+mlp"}
    ens = fit_soft_vote(X, y, "rf+xgb+mlp", seed=3,
                        member_params={"rf": {"n_estimators": 5}, "xgb": {"n_rounds": 5}, "mlp": {"variation_id": 1, "epochs": 5}})
    assert [m.kind for m in ens.members] == ["forest", "gbt", "mlp"]
    back = io.loads(io.dumps(ens))
    assert back.predict_proba(X).tobytes() == ens.predict_proba(X).tobytes()
    with pytest.raises(errors.InputError):
        fit_soft_vote(X, y, "rf+svm")


# -- LLM feature extension ----------------------------------------------------


def preds(ids):
    return [LlmPrediction(p, 1000.0 + i, "") for i, p in enumerate(ids)]


def test_extend_features(small_matrix):
    base = small_matrix.vector(0)
    six = extend_features_with_llm(base, preds(HYBRID_PROVIDERS), HybridMode.GlyHybrid)
    assert len(six.values) == len(base.values) + 6
    assert six.names[: len(base.names)] == base.names and six.values[: len(base.values)] == base.values
    assert six.names[-6:] == tuple(f"llm_{p}" for p in HYBRID_PROVIDERS)
    one = extend_features_with_llm(base, preds(HYBRID_PROVIDERS), "gly_hybrid_v2")
    assert len(one.values) == len(base.values) + 1 and one.names[-1] == "llm_claude_opus4"
    assert extend_features_with_llm(base, [], HybridMode.GlyBase) is base
    with pytest.raises(errors.MissingProvider):
        extend_features_with_llm(base, preds(HYBRID_PROVIDERS[:5]), HybridMode.GlyHybrid)
    with pytest.raises(errors.MissingProvider):
        extend_features_with_llm(base, preds(["gpt4"]), HybridMode.GlyMax)


@pytest.fixture(scope="module")
def hybrid_setup(cohort_matrix):
    M = cohort_matrix
    cols, _ = predict_rows(default_mock_providers(), [M.vector(i) for i in range(len(M))])
    tr, te = split_indices(len(M), SplitSpec(test_fraction=0.2, seed=4))
    return M, cols, tr, te


def test_gly_base_is_backbone(hybrid_setup):
    M, cols, tr, te = hybrid_setup
    res = run_hybrid_regression("gly_base", M, cols, tr, te, backbone_params={"n_estimators": 10}, seed=5)
    direct = forest_fit(M.X[tr], M.target("auc")[tr], n_estimators=10, seed=5).predict(M.X[te])
    assert res.predictions.tobytes() == direct.tobytes()
    g = run_hybrid_regression("gly_base", M, cols, tr, te, backbone="gbt", backbone_params={"n_rounds": 10}, seed=5)
    assert g.predictions.tobytes() == gbt_fit(M.X[tr], M.target("auc")[tr], n_rounds=10, seed=5).predict(M.X[te]).tobytes()


def test_gly_llm_oracle_provider(hybrid_setup):
    M, _, tr, te = hybrid_setup
    oracle = {"claude_opus4": M.target("auc").copy()}
    res = run_hybrid_regression("gly_llm", M, oracle, tr, te)
    assert nrmse(M.target("auc")[te], res.predictions) == 0.0


def test_hybrid_widths_and_gly_max_size(hybrid_setup):
    M, cols, tr, te = hybrid_setup
    p = len(M.names)
    h = run_hybrid_regression("gly_hybrid", M, cols, tr, te, backbone_params={"n_estimators": 5})
    v2 = run_hybrid_regression("gly_hybrid_v2", M, cols, tr, te, backbone_params={"n_estimators": 5})
    assert len(h.feature_names) == p + 6 and len(v2.feature_names) == p + 1
    np.testing.assert_allclose(h.scaler.transform(np.c_[M.X[tr], np.column_stack([cols[k][tr] for k in HYBRID_PROVIDERS])]).mean(axis=0), 0, atol=1e-9)
    mx = run_hybrid_regression("gly_max", M, cols, tr, te, augment_cfg=AugmentConfig(factor=2),
                               backbone_params={"n_estimators": 5})
    assert mx.n_train_rows == 3 * len(tr) and mx.train_synthetic.sum() == 2 * len(tr)
    assert len(mx.predictions) == len(te)
