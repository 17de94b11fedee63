import json
from itertools import combinations

import numpy as np
import pytest

from glucolens import errors
from glucolens.counterfactuals import CfConstraints, CounterfactualSet, diff_report, generate
from glucolens.models import forest_fit
from planted import IX, NAMES, fiber_stepping_problem


@pytest.fixture(scope="module")
def problem():
    return fiber_stepping_problem(0, n_estimators=20)


def scaled_distance(cons, a, b):
    m = cons.mutable_mask
    return np.sum(np.abs(a - b)[m] / cons.mad[m])


def test_contract(problem):
    model, cons, inst = problem
    cf = generate(model, inst, 0, k=3, constraints=cons, budget=3000, seed=1)
    x0 = inst.as_array()
    assert cf.original_label == 1 and cf.status == "ok" and len(cf) == 3
    assert (model.predict(cf.counterfactuals) == 0).all()
    imm = ~cons.mutable_mask
    assert (cf.counterfactuals[:, imm] == x0[imm]).all()
    assert (cf.counterfactuals >= np.minimum(cons.lower, x0)).all()
    assert (cf.counterfactuals <= np.maximum(cons.upper, x0)).all()
    dow = cf.counterfactuals[:, IX["day_of_week"]]
    wfh = cf.counterfactuals[:, IX["work_from_home"]]
    assert (dow == np.round(dow)).all() and (wfh == np.round(wfh)).all()
    for a, b in combinations(cf.counterfactuals, 2):
        assert scaled_distance(cons, a, b) > 0


def test_deterministic(problem):
    model, cons, inst = problem
    a = generate(model, inst, 0, constraints=cons, budget=1500, seed=7)
    b = generate(model, inst, 0, constraints=cons, budget=1500, seed=7)
    assert a.counterfactuals.tobytes() == b.counterfactuals.tobytes() and a.best_loss == b.best_loss


def test_best_loss_monotone_in_budget(problem):
    model, cons, inst = problem
    losses = [generate(model, inst, 0, constraints=cons, budget=b, seed=2).best_loss
              for b in (75, 200, 500, 1200, 3000)]
    assert all(x >= y for x, y in zip(losses, losses[1:]))


def test_constant_model_has_no_counterfactual(problem):
    _, cons, inst = problem
    X = np.random.default_rng(0).normal(size=(30, len(NAMES)))
    constant = forest_fit(X, np.zeros(30), 3, task="classification")
    with pytest.raises(errors.NoCounterfactualFound):
        generate(constant, inst, 1, constraints=cons, budget=500)


def test_partial_status():
    # only one mutable binary feature: a single distinct counterfactual exists
    X = np.array([[0.0, 30.0], [1.0, 30.0], [0.0, 25.0], [1.0, 35.0]])
    y = np.array([1, 0, 1, 0])
    model = forest_fit(X, y, 5, task="classification", bootstrap=False)
    cons = CfConstraints.from_training(X, ("work_from_home", "bmi"))
    cf = generate(model, X[0], 0, k=3, constraints=cons, budget=300)
    assert cf.status == "partial" and len(cf) == 1
    assert cf.counterfactuals[0].tolist() == [1.0, 30.0]


def test_bad_requests(problem):
    model, cons, inst = problem
    with pytest.raises(errors.InputError):
        generate(model, inst, 0, k=0, constraints=cons)
    with pytest.raises(errors.InputError):
        generate(model, inst, 2, constraints=cons)
    frozen = CfConstraints(cons.names, cons.lower, cons.upper, cons.mad, immutable=frozenset(NAMES))
    with pytest.raises(errors.NoCounterfactualFound):
        generate(model, inst, 0, constraints=frozen)
    with pytest.raises(errors.InputError):
        CfConstraints(cons.names, cons.upper + 1, cons.upper, cons.mad)


def test_diff_report_lists_changed_features_in_order():
    names = ("fasting_glucose", "fiber", "work_step")
    cfs = CounterfactualSet(names, np.array([90.0, 1.0, 9.0]), 1, 0,
                            np.array([[90.0, 5.0, 9.0], [90.0, 2.0, 39.38]]), np.array([0, 0]),
                            "ok", -1.0, 100)
    text = diff_report(cfs)
    blocks = text.split("Option ")[1:]
    assert [ln.strip() for ln in blocks[0].strip().splitlines()[1:]] == ["fiber: 1.00 -> 5.00"]
    assert [ln.split(":")[0].strip() for ln in blocks[1].strip().splitlines()[1:]] == ["fiber", "work_step"]
    doc = json.loads(cfs.to_json())
    assert doc["counterfactuals"][0]["changes"] == {"fiber": {"from": 1.0, "to": 5.0}}
