import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glucolens import errors
from glucolens.features import (
    FeatureMatrix,
    FeatureSetKind,
    FeatureVector,
    activity_durations,
    activity_score,
    assemble_features,
    build_feature_matrix,
    bucket_minutes,
    feature_names,
    glycemic_load,
    standardize,
)
from glucolens.ingest import (
    ActivityEvent,
    ActivityEventLog,
    ActivityKind,
    MacroProfile,
    Phase,
    WorkdayRecord,
)

COMMON = ["fasting_glucose", "recent_cgm", "lunch_time", "work_from_home", "bmi", "calories",
          "calories_from_fat", "saturated_fat", "trans_fat", "cholesterol", "sodium",
          "total_carbs", "sugar", "work_start_time", "day_of_week"]
SENSOR = ["prev_day_sit", "prev_day_stand", "prev_day_step", "work_sit", "work_stand", "work_step"]
GOLDEN = {
    "sensor_gl": COMMON + SENSOR + ["glycemic_load"],
    "sensor_macro": COMMON + SENSOR + ["net_carbs", "fat", "protein", "fiber"],
    "self_gl": COMMON + ["activity_score", "glycemic_load"],
    "self_macro": COMMON + ["activity_score", "net_carbs", "fat", "protein", "fiber"],
    "all": COMMON + SENSOR + ["activity_score", "glycemic_load", "net_carbs", "fat", "protein", "fiber"],
}


@pytest.mark.parametrize("kind", list(GOLDEN))
def test_feature_names_golden(kind):
    assert list(feature_names(kind)) == GOLDEN[kind]


def test_all_is_superset():
    all_names = set(feature_names("all"))
    for k in FeatureSetKind:
        assert set(feature_names(k)) <= all_names
    assert len(all_names) == 27


def test_glycemic_load_examples():
    assert glycemic_load(MacroProfile()) == pytest.approx(19.27, abs=1e-9)
    m = MacroProfile(total_carbs=60, net_carbs=50, fat=10, protein=20, fiber=5)
    assert glycemic_load(m) == pytest.approx(32.42, abs=1e-9)
    assert glycemic_load(MacroProfile(total_carbs=100, net_carbs=100)) == pytest.approx(58.27, abs=1e-9)


@settings(max_examples=50)
@given(st.floats(0, 200), st.floats(0, 100), st.floats(0, 50))
def test_glycemic_load_protein_second_difference(protein, fiber, fat):
    h = 0.5

    def gl(p):
        return glycemic_load(MacroProfile(total_carbs=50, net_carbs=40, fat=fat, protein=p, fiber=fiber))

    second = (gl(protein + 2 * h) - 2 * gl(protein + h) + gl(protein)) / h ** 2
    assert second == pytest.approx(-0.02, abs=1e-6)


def _wd(day, walk, stand, phase=Phase.Baseline):
    return WorkdayRecord("P1", dt.date(2024, 3, day), 540, 1020, False, 100 - walk - stand, stand, walk, phase)


def test_activity_score():
    assert activity_score([_wd(4, 10, 30), _wd(5, 20, 50)]) == pytest.approx(35.0)
    assert activity_score([_wd(4, 0, 0)]) == 0.0
    with pytest.raises(errors.NoPriorDays):
        activity_score([])
    with pytest.raises(errors.InputError):
        activity_score([_wd(4, 0, 0), _wd(5, 0, 0, Phase.Condition1)])
    with pytest.raises(errors.InputError):
        activity_score([_wd(6, 0, 0)], before=dt.date(2024, 3, 6))


def _log(*events):
    return ActivityEventLog("P1", tuple(ActivityEvent(s, d, k) for s, d, k in events))


LUNCH = dt.datetime(2024, 3, 5, 12, 30)
WORK = dt.datetime(2024, 3, 5, 9, 0)


def test_durations_stepping_inside_work():
    log = _log((dt.datetime(2024, 3, 5, 10), 1800, ActivityKind.Stepping))
    d = activity_durations(log, LUNCH, WORK)
    assert d.work_step == 30 and d.work_sit == 0 and d.prev_day_step == 0


def test_durations_pro_rata_straddle():
    log = _log((dt.datetime(2024, 3, 5, 8, 30), 3600, ActivityKind.Sedentary))
    d = activity_durations(log, LUNCH, WORK)
    assert d.work_sit == pytest.approx(30.0)


def test_durations_cycling_and_lying_ignored():
    log = _log(
        (dt.datetime(2024, 3, 4, 1), 3600, ActivityKind.PrimaryLying),
        (dt.datetime(2024, 3, 4, 8), 1200, ActivityKind.Cycling),
        (dt.datetime(2024, 3, 5, 10), 1200, ActivityKind.Cycling),
        (dt.datetime(2024, 3, 5, 11), 1200, ActivityKind.SecondaryLying),
    )
    assert activity_durations(log, LUNCH, WORK).as_tuple() == (0, 0, 0, 0, 0, 0)


def test_durations_prev_day_modes():
    log = _log(
        (dt.datetime(2024, 3, 4, 18), 600, ActivityKind.SeatedTransport),
        (dt.datetime(2024, 3, 5, 7), 600, ActivityKind.Standing),
    )
    d = activity_durations(log, LUNCH, WORK)
    assert (d.prev_day_sit, d.prev_day_stand) == (10, 0)
    d = activity_durations(log, LUNCH, WORK, prev_day_mode="midnight_to_lunch")
    assert (d.prev_day_sit, d.prev_day_stand) == (0, 10)
    with pytest.raises(errors.EmptyLog):
        activity_durations(_log(), LUNCH, WORK)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 600), st.sampled_from(list(ActivityKind))), min_size=1, max_size=30),
       st.integers(0, 1500), st.integers(1, 900))
def test_durations_partition_time(chunks, offset, length):
    t = dt.datetime(2024, 3, 4)
    events = []
    for dur_min, kind in chunks:
        events.append((t, dur_min * 60.0, kind))
        t += dt.timedelta(minutes=dur_min)
    log = _log(*events)
    a = dt.datetime(2024, 3, 4) + dt.timedelta(minutes=offset)
    b = a + dt.timedelta(minutes=length)
    sit, stand, step = bucket_minutes(log, a, b)
    assert min(sit, stand, step) >= 0
    assert sit + stand + step <= length + 1e-9


def test_assemble_features_sets(small_cohort):
    p = small_cohort[0]
    meal = p.modeling_lunches()[3]
    vecs = {k: assemble_features(p, meal, k) for k in FeatureSetKind}
    sgl = vecs[FeatureSetKind.SensorGL].as_dict()
    assert "glycemic_load" in sgl and "activity_score" not in sgl
    assert not {"net_carbs", "fat", "protein", "fiber"} & set(sgl)
    assert set(SENSOR) <= set(sgl)
    full = vecs[FeatureSetKind.All].as_dict()
    for k, v in vecs.items():
        for name, value in v.as_dict().items():
            assert full[name] == value
    assert full["day_of_week"] == meal.meal_time.weekday()
    assert full["lunch_time"] == meal.meal_time.hour * 60 + meal.meal_time.minute
    # determinism
    assert assemble_features(p, meal, "all") == vecs[FeatureSetKind.All]


def test_assemble_features_missing_work_log(small_cohort):
    p = small_cohort[0]
    weekend = [m for i, m in enumerate(p.meals) if p.flagged_meals.get(i) == "no same-day workday"][0]
    with pytest.raises(errors.MissingUpstreamFeature) as info:
        assemble_features(p, weekend, "all")
    assert info.value.feature == "work start time"


def test_build_feature_matrix_csv_round_trip(small_cohort):
    fm, skipped = build_feature_matrix(small_cohort, "all")
    assert len(fm) > 20
    again = FeatureMatrix.from_csv(fm.to_csv())
    assert again.names == fm.names
    np.testing.assert_array_equal(again.X, fm.X)
    for t in fm.targets:
        np.testing.assert_array_equal(again.targets[t], fm.targets[t])
    assert fm.to_csv().splitlines()[0].endswith("auc,iauc,max_bgl,hyper")


def test_standardize_examples():
    _, z = standardize(np.array([[1.0, 5.0], [3.0, 5.0]]))
    np.testing.assert_array_equal(z, [[-1.0, 0.0], [1.0, 0.0]])
    a = FeatureVector(FeatureSetKind.SensorGL, ("x",), (1.0,))
    b = FeatureVector(FeatureSetKind.All, ("x",), (2.0,))
    with pytest.raises(errors.HeterogeneousSets):
        standardize([a, b])
    scaler, out = standardize([a, FeatureVector(FeatureSetKind.SensorGL, ("x",), (3.0,))])
    assert [v.values for v in out] == [(-1.0,), (1.0,)]


@settings(max_examples=40)
@given(st.integers(2, 30), st.integers(1, 6), st.integers(0, 2 ** 31))
def test_standardize_inverse(n, p, seed):
    X = np.random.default_rng(seed).normal(50, 20, size=(n, p))
    scaler, Z = standardize(X)
    np.testing.assert_allclose(scaler.inverse_transform(Z), X, atol=1e-10)
    np.testing.assert_allclose(Z.mean(axis=0), 0, atol=1e-9)
