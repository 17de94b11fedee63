"""Acceptance suite: one block per criterion, summarised as PASS/FAIL lines at the end of the run.

Run on its own with ``pytest -m acceptance``.
"""

import datetime as dt
import json
import os
import socket
import time
from itertools import combinations

import numpy as np
import pytest

from glucolens import errors
from glucolens.cli import main
from glucolens.counterfactuals import generate
from glucolens.ensemble import (
    HybridMode,
    SoftVoteEnsemble,
    extend_features_with_llm,
    extend_matrix_with_llm,
)
from glucolens.evaluation import ExperimentConfig, run_experiment
from glucolens.features import glycemic_load
from glucolens.glycemic import PostprandialWindow, baseline_at, compute_auc, compute_iauc
from glucolens.ingest import MacroProfile
from glucolens.llm import (
    HYBRID_PROVIDERS,
    LlmPrediction,
    MockProvider,
    PromptTemplate,
    build_prompt,
    default_mock_providers,
    predict_rows,
    query,
)
from glucolens.models import forest_fit, gbt_fit, mlp_fit, ridge_fit
from glucolens.models.mlp import VARIATIONS, gradient_check, init_mlp
from glucolens.resampling import AdasynConfig, adasyn_balance

from conftest import make_trace
from planted import IX, fiber_stepping_problem
from test_glycemic import T0, random_trace, riemann_oracle
from test_models import ridge_oracle
from test_resampling import on_some_segment

acceptance = pytest.mark.acceptance

# Member sizes used for the 100-seed classification runs (grid values for the forest).
SOFT_VOTE_PARAMS = {
    "rf": {"n_estimators": 50},
    "gbt": {"n_rounds": 50},
    "mlp": {"variation_id": 13, "epochs": 100, "batch_size": 32},
}


def timed(fn, *args, **kwargs):
    t = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t


# -- 1 -------------------------------------------------------------------------


@acceptance(1, "glycemic load reference values")
def test_c01_glycemic_load():
    t = time.perf_counter()
    assert abs(glycemic_load(MacroProfile()) - 19.27) <= 1e-9
    m = MacroProfile(total_carbs=55, net_carbs=50, fat=10, protein=20, fiber=5)
    assert abs(glycemic_load(m) - 32.42) <= 1e-9
    assert time.perf_counter() - t < 1.0


# -- 2 -------------------------------------------------------------------------


def kink_error_bound(trace, start, minutes, baseline):
    """Worst-case midpoint error of the oracle itself: |slope| h^2 / 8 per baseline crossing."""
    t0 = float(np.datetime64(start, "m").astype(np.int64))
    t, g = trace.minutes - t0, trace.values - baseline
    keep = (t[1:] > 0) & (t[:-1] < minutes) & (np.sign(g[1:]) != np.sign(g[:-1]))
    slopes = np.abs(np.diff(g) / np.diff(t))[keep]
    return float(slopes.sum() * (1 / 60) ** 2 / 8)


@acceptance(2, "trapezoid AUC/iAUC against a 1-second Riemann oracle")
def test_c02_auc_iauc_oracle():
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    checked = 0
    while checked < 100:
        tr = random_trace(rng, n=int(rng.integers(16, 30)))
        minutes = float(rng.choice([60, 120, 180]))
        w = PostprandialWindow(T0, minutes)
        try:
            auc = compute_auc(tr, w)
            base = baseline_at(tr, T0)
            iauc = compute_iauc(tr, w, base)
        except errors.InputError:
            continue
        assert auc == pytest.approx(riemann_oracle(tr, T0, minutes), rel=1e-6)
        want = riemann_oracle(tr, T0, minutes, base)
        assert abs(iauc - want) <= 1e-6 * want + kink_error_bound(tr, T0, minutes, base)
        checked += 1
    for level in (55.0, 100.0, 287.5):
        flat = make_trace(T0 - dt.timedelta(minutes=15), [level] * 15)
        assert compute_auc(flat, PostprandialWindow(T0, 180)) == level * 180
    assert time.perf_counter() - t < 10.0


# -- 3 -------------------------------------------------------------------------


@acceptance(3, "ridge against normal equations; shrinkage monotone")
def test_c03_ridge():
    t = time.perf_counter()
    rng = np.random.default_rng(3)
    for i in range(50):
        n, p = int(rng.integers(8, 60)), int(rng.integers(1, 7))
        X = rng.normal(size=(n, p)) * rng.uniform(0.5, 3, p)
        y = X @ rng.normal(size=p) + rng.normal(size=n) + rng.normal() * 5
        alpha = float(rng.choice([1.0, 0.1, 0.01]))
        m = ridge_fit(X, y, alpha)
        w, b = ridge_oracle(X, y, alpha)
        np.testing.assert_allclose(m.weights, w, atol=1e-8, rtol=0)
        assert abs(m.intercept - b) <= 1e-8
        norms = [np.linalg.norm(ridge_fit(X, y, a).weights) for a in (0.01, 0.1, 1.0, 10.0, 100.0)]
        assert all(a >= b for a, b in zip(norms, norms[1:]))
    assert time.perf_counter() - t < 5.0


# -- 4 -------------------------------------------------------------------------


@acceptance(4, "MLP backprop against central differences")
def test_c04_gradient_check():
    t = time.perf_counter()
    for variation in (1, 5, 13):
        for task in ("regression", "classification"):
            rng = np.random.default_rng(variation)
            X = rng.normal(size=(5, 27))
            y = rng.integers(0, 2, 5) if task == "classification" else rng.normal(100, 10, 5)
            net = init_mlp(27, VARIATIONS[variation], task, seed=variation)
            if task == "regression":
                net.y_mean, net.y_scale = float(y.mean()), float(y.std())
            assert gradient_check(net, X, y) < 1e-4, (variation, task)
    assert time.perf_counter() - t < 30.0


# -- 5 -------------------------------------------------------------------------


@acceptance(5, "ADASYN balance, segment membership, originals kept")
def test_c05_adasyn():
    t = time.perf_counter()
    rng = np.random.default_rng(5)
    for trial in range(10):
        n_min, n_maj, p = int(rng.integers(3, 15)), int(rng.integers(20, 60)), int(rng.integers(2, 6))
        X = np.vstack([rng.normal(0, 1, (n_maj, p)), rng.normal(0.7, 1, (n_min, p))])
        y = np.r_[np.zeros(n_maj), np.ones(n_min)]
        k = int(rng.integers(1, 6))
        out, y2, syn = adasyn_balance(X, y, AdasynConfig(k_neighbors=k, beta=1.0, seed=trial))
        assert abs(int((y2 == 0).sum()) - int((y2 == 1).sum())) <= k
        assert out[: len(X)].tobytes() == X.tobytes()
        assert np.array_equal(y2[: len(y)], y)
        minority = X[y == 1]
        assert all(on_some_segment(s, minority, tol=1e-9) for s in out[syn])
    assert time.perf_counter() - t < 5.0


# -- shared 100-seed classification runs (criteria 6 and 9) ----------------------


@pytest.fixture(scope="module")
def split_size_runs(cohort_matrix):
    base = ExperimentConfig(task="classification", target="hyper", model="rf+xgb+mlp",
                            member_params=SOFT_VOTE_PARAMS, n_seeds=100, seed=0)
    runs, seconds = {}, 0.0
    for label, frac in (("70/30", 0.3), ("95/5", 0.05)):
        cfg = base.replace(split={"kind": "fraction", "test_fraction": frac}, label=label)
        runs[label], s = timed(run_experiment, cohort_matrix, cfg)
        seconds += s
    return runs, seconds


# -- 6 -------------------------------------------------------------------------


@acceptance(6, "soft vote is an exact mean; no synthetic row reaches a test fold")
def test_c06_soft_vote_mean(small_matrix):
    X = small_matrix.X
    y = small_matrix.target("hyper").astype(int)
    members = [
        forest_fit(X, y, 10, task="classification", seed=1),
        gbt_fit(X, y, 10, task="classification"),
        mlp_fit((X - X.mean(0)) / (X.std(0) + 1), y, 1, task="classification", epochs=5),
    ]
    ens = SoftVoteEnsemble(members)
    want = np.mean([m.predict_proba(X) for m in members], axis=0)
    np.testing.assert_allclose(ens.predict_proba(X), want, atol=1e-12, rtol=0)
    for m in members:
        single = SoftVoteEnsemble([m])
        assert single.predict_proba(X).tobytes() == m.predict_proba(X).tobytes()
        assert (single.predict(X) == m.predict(X)).all()


@acceptance(6, "soft vote is an exact mean; no synthetic row reaches a test fold")
def test_c06_no_synthetic_rows_in_test(split_size_runs):
    runs, _ = split_size_runs
    for r in runs.values():
        assert len(r.per_seed) == 100
        assert r.audit["synthetic_in_test"] == 0 and r.audit["test_rows_in_train"] == 0
        assert r.audit["synthetic_train_rows"] > 0


# -- 7 -------------------------------------------------------------------------


@acceptance(7, "counterfactuals on a planted fiber/stepping forest")
def test_c07_counterfactuals():
    t = time.perf_counter()
    model, cons, inst = fiber_stepping_problem(0, n_estimators=50)
    x0 = inst.as_array()
    fixed = ~cons.mutable_mask
    lo, hi = np.minimum(cons.lower, x0), np.maximum(cons.upper, x0)
    raised = 0
    for seed in range(10):
        cf = generate(model, inst, 0, k=3, constraints=cons, seed=seed)
        C = cf.counterfactuals
        assert len(cf) == 3
        assert (model.predict(C) == 0).all()
        assert (C[:, fixed] == x0[fixed]).all()
        assert ((C >= lo) & (C <= hi)).all()
        m = cons.mutable_mask
        for a, b in combinations(C, 2):
            assert np.sum(np.abs(a - b)[m] / cons.mad[m]) > 0
        up = (C[:, IX["fiber"]] > x0[IX["fiber"]]) | (C[:, IX["work_step"]] > x0[IX["work_step"]])
        raised += bool(up.all())
    assert raised >= 9
    assert time.perf_counter() - t < 120.0


# -- 8 -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def forest_vs_mean(cohort_matrix):
    base = ExperimentConfig(task="regression", target="auc", n_seeds=100, seed=0)
    mean_run, s0 = timed(run_experiment, cohort_matrix, base.replace(model="mean"))
    rf_run, s1 = timed(run_experiment, cohort_matrix,
                       base.replace(model="rf", model_params={"n_estimators": 50}))
    return mean_run, rf_run, s0 + s1


@acceptance(8, "planted cohort: forest NRMSE at least 20% below the mean predictor")
def test_c08_forest_beats_mean(forest_vs_mean):
    mean_run, rf_run, seconds = forest_vs_mean
    assert len(rf_run.per_seed) == len(mean_run.per_seed) == 100
    assert rf_run.seeds == mean_run.seeds
    baseline, forest = mean_run.mean("nrmse"), rf_run.mean("nrmse")
    assert (baseline - forest) / baseline >= 0.20
    assert seconds < 300.0


# -- 9 -------------------------------------------------------------------------


@acceptance(9, "soft vote accuracy 95/5 >= 70/30; tolerance curves monotone")
def test_c09_training_size_pattern(split_size_runs, forest_vs_mean):
    runs, seconds = split_size_runs
    assert runs["95/5"].mean("accuracy") >= runs["70/30"].mean("accuracy")
    assert seconds < 600.0
    for report in forest_vs_mean[:2]:
        cols = [k for k in report.per_seed[0] if k.startswith("within_")]
        assert len(cols) >= 2
        curves = np.array([[row[c] for c in cols] for row in report.per_seed])
        assert (np.diff(curves, axis=1) >= 0).all()


# -- 10 ------------------------------------------------------------------------


def run_pipeline(root, seed):
    raw, ds, feats, rep = root / "raw", root / "ds.json", root / "f.csv", root / "report"
    g = ["--seed", str(seed)]
    assert main(g + ["synth", "--out-dir", str(raw), "--participants", "4"]) == 0
    assert main(g + ["ingest", "--data-dir", str(raw), "--out", str(ds)]) == 0
    assert main(g + ["featurize", "--dataset", str(ds), "--out", str(feats)]) == 0
    assert main(g + ["evaluate", "--features", str(feats), "--n-est", "10", "--n-seeds", "5",
                     "--out-dir", str(rep / "reg")]) == 0
    assert main(g + ["evaluate", "--features", str(feats), "--task", "classification", "--model", "rf+xgb",
                     "--n-est", "10", "--n-rounds", "10", "--n-seeds", "3", "--out-dir", str(rep / "cls")]) == 0
    files = {}
    for dirpath, _, names in os.walk(root):
        for n in names:
            p = os.path.join(dirpath, n)
            with open(p, "rb") as fh:
                files[os.path.relpath(p, root)] = fh.read()
    return files


def shape_of(obj):
    if isinstance(obj, dict):
        return {k: shape_of(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [shape_of(obj[0])] if obj else []
    return type(obj).__name__


@acceptance(10, "byte-identical reruns; seed changes the fingerprint only")
def test_c10_determinism(tmp_path, capsys):
    t = time.perf_counter()
    a = run_pipeline(tmp_path / "a", 0)
    b = run_pipeline(tmp_path / "b", 0)
    c = run_pipeline(tmp_path / "c", 1)
    assert sorted(a) == sorted(b) == sorted(c)
    assert any(k.endswith("report.json") for k in a)
    for k in a:
        assert a[k] == b[k], k
    for k in (k for k in a if k.endswith("report.json")):
        ra, rc = json.loads(a[k]), json.loads(c[k])
        assert ra["fingerprint"] != rc["fingerprint"]
        assert ra["config"]["seed"] == 0 and rc["config"]["seed"] == 1
        assert {x: v for x, v in ra["config"].items() if x != "seed"} == \
               {x: v for x, v in rc["config"].items() if x != "seed"}
        assert shape_of(ra) == shape_of(rc)
    assert time.perf_counter() - t < 60.0


# -- 11 ------------------------------------------------------------------------


@acceptance(11, "offline LLM bridge: no network, refusals surface, hybrid widths")
def test_c11_llm_offline(small_matrix):
    with pytest.raises(Exception) as exc:
        socket.create_connection(("example.com", 80), timeout=1)
    assert type(exc.value).__name__ == "NetworkBlocked"

    with pytest.raises(errors.RefusedPrediction):
        query(MockProvider("gpt4", "I'm sorry, I can't estimate glucose values."), "prompt")

    vectors = [small_matrix.vector(i) for i in range(4)]
    providers = default_mock_providers(seed=0)[:5] + [MockProvider("grok3", "No numeric estimate is possible.")]
    cols, refused = predict_rows(providers, vectors, "auc", PromptTemplate.default())
    assert refused == ["grok3"] and sorted(cols) == sorted(HYBRID_PROVIDERS[:5])

    cols = {p: np.full(len(small_matrix), 9000.0) for p in HYBRID_PROVIDERS}
    width = small_matrix.X.shape[1]
    X6, names6 = extend_matrix_with_llm(small_matrix.X, small_matrix.names, cols, "gly_hybrid")
    X1, names1 = extend_matrix_with_llm(small_matrix.X, small_matrix.names, cols, "gly_hybrid_v2")
    assert X6.shape[1] - width == 6 and len(names6) - width == 6
    assert X1.shape[1] - width == 1 and names1[-1] == "llm_claude_opus4"

    base = small_matrix.vector(0)
    preds = [LlmPrediction(p, 9000.0, "Prediction: 9000", False) for p in HYBRID_PROVIDERS]
    assert len(extend_features_with_llm(base, preds, HybridMode.GlyHybrid)) == len(base) + 6
    assert len(extend_features_with_llm(base, preds, "gly_hybrid_v2")) == len(base) + 1
    assert build_prompt(PromptTemplate.default(), base).rstrip().endswith(f"fiber: {base.as_array()[-1]:.2f}")
