"""Per-lunch feature vectors for the five feature-set configurations.

Canonical column order follows the feature table row order, with the six
sensor activity durations expanded in place of the single activPAL row::

    fasting_glucose, recent_cgm, lunch_time, work_from_home, bmi, calories,
    calories_from_fat, saturated_fat, trans_fat, cholesterol, sodium,
    total_carbs, sugar, work_start_time, day_of_week,
    prev_day_sit, prev_day_stand, prev_day_step, work_sit, work_stand, work_step,
    activity_score, glycemic_load, net_carbs, fat, protein, fiber

Times are minutes since midnight, work-from-home is 0/1 and day of week is
0 (Monday) to 6 (Sunday).
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    EmptyLog,
    HeterogeneousSets,
    InputError,
    MissingUpstreamFeature,
    NoPriorDays,
)
from .glycemic import (
    DEFAULT_MAX_GAP_MIN,
    DEFAULT_WINDOW_MIN,
    HYPER_THRESHOLD,
    fasting_glucose,
    glycemic_targets,
    recent_cgm,
)
from .ingest import ActivityEventLog, ActivityKind, MacroProfile, ParticipantData

log = logging.getLogger(__name__)

GL_INTERCEPT = 19.27
GL_NET_CARB = 0.39
GL_FAT = 0.21
GL_PROTEIN_SQ = 0.01
GL_FIBER_SQ = 0.01


class FeatureSetKind(enum.Enum):
    SensorGL = "sensor_gl"
    SensorMacro = "sensor_macro"
    SelfGL = "self_gl"
    SelfMacro = "self_macro"
    All = "all"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("+", "_").replace("-", "_").replace(" ", "")
        for m in cls:
            if key in (m.value, m.name.lower()):
                return m
        raise InputError(f"unknown feature set {text!r}; choose from {[m.value for m in cls]}")

    @property
    def uses_sensor(self):
        return self in (FeatureSetKind.SensorGL, FeatureSetKind.SensorMacro, FeatureSetKind.All)

    @property
    def uses_self_report(self):
        return self in (FeatureSetKind.SelfGL, FeatureSetKind.SelfMacro, FeatureSetKind.All)

    @property
    def uses_gl(self):
        return self in (FeatureSetKind.SensorGL, FeatureSetKind.SelfGL, FeatureSetKind.All)

    @property
    def uses_macros(self):
        return self in (FeatureSetKind.SensorMacro, FeatureSetKind.SelfMacro, FeatureSetKind.All)


COMMON_FEATURES = (
    "fasting_glucose", "recent_cgm", "lunch_time", "work_from_home", "bmi",
    "calories", "calories_from_fat", "saturated_fat", "trans_fat", "cholesterol",
    "sodium", "total_carbs", "sugar", "work_start_time", "day_of_week",
)
SENSOR_FEATURES = (
    "prev_day_sit", "prev_day_stand", "prev_day_step", "work_sit", "work_stand", "work_step",
)
SELF_FEATURES = ("activity_score",)
GL_FEATURES = ("glycemic_load",)
MACRO_FEATURES = ("net_carbs", "fat", "protein", "fiber")
TARGET_COLUMNS = ("auc", "iauc", "max_bgl", "hyper")


def feature_names(set_kind) -> tuple[str, ...]:
    kind = FeatureSetKind.parse(set_kind)
    names = list(COMMON_FEATURES)
    if kind.uses_sensor:
        names += SENSOR_FEATURES
    if kind.uses_self_report:
        names += SELF_FEATURES
    if kind.uses_gl:
        names += GL_FEATURES
    if kind.uses_macros:
        names += MACRO_FEATURES
    return tuple(names)


# ---------------------------------------------------------------------------
# elementary features
# ---------------------------------------------------------------------------


def glycemic_load(macros: MacroProfile) -> float:
    """Meal glycemic load from net carbs, fat, protein and fiber (grams).

    May be negative for extreme inputs; the value is passed through as is.
    """
    return (
        GL_INTERCEPT
        + GL_NET_CARB * macros.net_carbs
        - GL_FAT * macros.fat
        - GL_PROTEIN_SQ * macros.protein ** 2
        - GL_FIBER_SQ * macros.fiber ** 2
    )


def activity_score(prior_workdays, before: dt.date | None = None) -> float:
    """Mean walking % plus half the mean standing % over prior same-phase days."""
    days = list(prior_workdays)
    if not days:
        raise NoPriorDays("activity score needs at least one prior workday")
    phases = {d.phase for d in days}
    if len(phases) > 1:
        raise InputError(f"prior workdays span several phases: {sorted(p.name for p in phases)}")
    if before is not None and any(d.date >= before for d in days):
        raise InputError("prior workdays must all precede the target date")
    walking = np.mean([d.pct_walking for d in days])
    standing = np.mean([d.pct_standing for d in days])
    return float(walking + 0.5 * standing)


_SIT = (ActivityKind.Sedentary.value, ActivityKind.SeatedTransport.value)
_STAND = (ActivityKind.Standing.value,)
_STEP = (ActivityKind.Stepping.value,)


@dataclass(frozen=True)
class ActivityDurations:
    """Minutes of sitting/standing/stepping before lunch."""

    prev_day_sit: float
    prev_day_stand: float
    prev_day_step: float
    work_sit: float
    work_stand: float
    work_step: float

    def __post_init__(self):
        for v in self.as_tuple():
            if v < 0:
                raise InputError("activity durations must be non-negative")

    def as_tuple(self):
        return (self.prev_day_sit, self.prev_day_stand, self.prev_day_step,
                self.work_sit, self.work_stand, self.work_step)


def bucket_minutes(log: ActivityEventLog, start: dt.datetime, end: dt.datetime):
    """(sit, stand, step) minutes within ``[start, end)``, pro-rata for straddling events."""
    a = float(np.datetime64(start, "s").astype(np.int64))
    b = float(np.datetime64(end, "s").astype(np.int64))
    s = log.starts
    e = s + log.durations
    overlap = np.clip(np.minimum(e, b) - np.maximum(s, a), 0.0, None)
    kinds = log.kinds
    out = []
    for group in (_SIT, _STAND, _STEP):
        out.append(float(overlap[np.isin(kinds, group)].sum()) / 60.0)
    return tuple(out)


PREV_DAY_MODES = ("previous_day", "midnight_to_lunch")


def activity_durations(log, lunch_time, work_start, prev_day_mode="previous_day") -> ActivityDurations:
    """Sensor activity minutes for the day before lunch and for work-until-lunch.

    ``prev_day_mode="previous_day"`` counts the whole previous calendar day;
    ``"midnight_to_lunch"`` counts the lunch day from 00:00 to lunch instead.
    Cycling and both lying kinds fall in none of the buckets.
    """
    if len(log) == 0:
        raise EmptyLog("activity log has no events")
    if not work_start < lunch_time:
        raise InputError("work start must precede lunch")
    midnight = dt.datetime.combine(lunch_time.date(), dt.time())
    if prev_day_mode == "previous_day":
        prev = bucket_minutes(log, midnight - dt.timedelta(days=1), midnight)
    elif prev_day_mode == "midnight_to_lunch":
        prev = bucket_minutes(log, midnight, lunch_time)
    else:
        raise InputError(f"unknown prev_day_mode {prev_day_mode!r}")
    work = bucket_minutes(log, work_start, lunch_time)
    return ActivityDurations(*prev, *work)


# ---------------------------------------------------------------------------
# vectors and matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureVector:
    set_kind: FeatureSetKind
    names: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise InputError("feature names and values are misaligned")
        if any(not np.isfinite(v) for v in self.values):
            raise InputError("feature vector contains missing values")

    def as_array(self):
        return np.array(self.values, dtype=float)

    def as_dict(self):
        return dict(zip(self.names, self.values))

    def __len__(self):
        return len(self.values)


def _minutes_of_day(t: dt.datetime):
    return t.hour * 60 + t.minute + t.second / 60.0


def assemble_features(participant: ParticipantData, meal, set_kind, prev_day_mode="previous_day") -> FeatureVector:
    kind = FeatureSetKind.parse(set_kind)
    day = meal.meal_time.date()
    work = participant.workday_on(day)
    if work is None:
        raise MissingUpstreamFeature("work start time", f"no work log on {day}")
    try:
        fasting = fasting_glucose(participant.cgm, day)
    except InputError as exc:
        raise MissingUpstreamFeature("fasting glucose", str(exc)) from None
    try:
        recent = recent_cgm(participant.cgm, day)
    except InputError as exc:
        raise MissingUpstreamFeature("recent CGM", str(exc)) from None

    m = meal.macros
    values = {
        "fasting_glucose": fasting,
        "recent_cgm": recent,
        "lunch_time": _minutes_of_day(meal.meal_time),
        "work_from_home": 1.0 if work.work_from_home else 0.0,
        "bmi": participant.bmi,
        "calories": m.calories,
        "calories_from_fat": m.calories_from_fat,
        "saturated_fat": m.saturated_fat,
        "trans_fat": m.trans_fat,
        "cholesterol": m.cholesterol,
        "sodium": m.sodium,
        "total_carbs": m.total_carbs,
        "sugar": m.sugar,
        "work_start_time": float(work.work_start),
        "day_of_week": float(day.weekday()),
    }
    if kind.uses_sensor:
        try:
            durs = activity_durations(
                participant.activity, meal.meal_time, work.work_start_datetime, prev_day_mode
            )
        except InputError as exc:
            raise MissingUpstreamFeature("activPAL durations", str(exc)) from None
        values.update(zip(SENSOR_FEATURES, durs.as_tuple()))
    if kind.uses_self_report:
        prior = [w for w in participant.workdays if w.date < day and w.phase == work.phase]
        try:
            values["activity_score"] = activity_score(prior, before=day)
        except NoPriorDays as exc:
            raise MissingUpstreamFeature("self-reported activity score", str(exc)) from None
    if kind.uses_gl:
        values["glycemic_load"] = glycemic_load(m)
    if kind.uses_macros:
        values.update(net_carbs=m.net_carbs, fat=m.fat, protein=m.protein, fiber=m.fiber)
    names = feature_names(kind)
    return FeatureVector(kind, names, tuple(float(values[n]) for n in names))


@dataclass
class FeatureMatrix:
    """A tabular dataset: one row per lunch, canonical feature columns plus targets."""

    set_kind: FeatureSetKind
    names: tuple[str, ...]
    X: np.ndarray
    targets: dict[str, np.ndarray]
    row_ids: list[str] = field(default_factory=list)
    groups: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(-1, len(self.names))
        n = self.X.shape[0]
        if not self.row_ids:
            self.row_ids = [f"row{i}" for i in range(n)]
        if not self.groups:
            self.groups = [""] * n
        for k, v in self.targets.items():
            if len(v) != n:
                raise InputError(f"target {k!r} has {len(v)} rows, expected {n}")

    def __len__(self):
        return self.X.shape[0]

    def target(self, name):
        try:
            return self.targets[name]
        except KeyError:
            raise InputError(f"unknown target {name!r}; have {sorted(self.targets)}") from None

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return FeatureMatrix(
            self.set_kind, self.names, self.X[idx],
            {k: v[idx] for k, v in self.targets.items()},
            [self.row_ids[i] for i in idx], [self.groups[i] for i in idx],
        )

    def vector(self, i) -> FeatureVector:
        return FeatureVector(self.set_kind, self.names, tuple(float(v) for v in self.X[i]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.names) + list(TARGET_COLUMNS))
        for i in range(len(self)):
            row = [repr(float(v)) for v in self.X[i]]
            for t in TARGET_COLUMNS:
                v = self.targets[t][i]
                row.append(str(int(v)) if t == "hyper" else repr(float(v)))
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, source=None) -> "FeatureMatrix":
        from .errors import MalformedRow

        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow("empty feature file", line=1, source=source) from None
        names = tuple(header[: len(header) - len(TARGET_COLUMNS)])
        if tuple(header[len(names):]) != TARGET_COLUMNS:
            raise MalformedRow(f"feature file must end with columns {TARGET_COLUMNS}", line=1, source=source)
        kind = next((k for k in FeatureSetKind if feature_names(k) == names), None)
        if kind is None:
            raise MalformedRow("header does not match any feature set", line=1, source=source)
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedRow(f"expected {len(header)} fields", line=reader.line_num, source=source)
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise MalformedRow(str(exc), line=reader.line_num, source=source) from None
        arr = np.array(rows, dtype=float).reshape(-1, len(header))
        p = len(names)
        targets = {t: arr[:, p + j] for j, t in enumerate(TARGET_COLUMNS)}
        targets["hyper"] = targets["hyper"].astype(int)
        return cls(kind, names, arr[:, :p], targets)


def build_feature_matrix(
    participants: Sequence[ParticipantData],
    set_kind,
    window=DEFAULT_WINDOW_MIN,
    max_gap=DEFAULT_MAX_GAP_MIN,
    threshold=HYPER_THRESHOLD,
    policy="max_in_window",
    prev_day_mode="previous_day",
):
    """Feature rows and targets for every modelable workday lunch.

    Returns ``(matrix, skipped)`` where ``skipped`` lists ``(row_id, reason)``
    for lunches that lacked an upstream feature or a usable CGM window.
    """
    kind = FeatureSetKind.parse(set_kind)
    names = feature_names(kind)
    rows, ids, groups = [], [], []
    tgt = {t: [] for t in TARGET_COLUMNS}
    skipped = []
    for p in participants:
        for meal in p.modeling_lunches():
            rid = f"{p.participant_id}:{meal.meal_time:%Y-%m-%dT%H:%M}"
            try:
                fv = assemble_features(p, meal, kind, prev_day_mode)
                targets = glycemic_targets(p.cgm, meal.meal_time, window, max_gap, threshold, policy)
            except InputError as exc:
                skipped.append((rid, str(exc)))
                continue
            rows.append(fv.values)
            ids.append(rid)
            groups.append(p.participant_id)
            tgt["auc"].append(targets.auc)
            tgt["iauc"].append(targets.iauc)
            tgt["max_bgl"].append(targets.max_bgl)
            tgt["hyper"].append(int(targets.hyperglycemic))
    if skipped:
        log.info("skipped %d lunches without complete inputs", len(skipped))
    targets = {k: np.array(v, dtype=int if k == "hyper" else float) for k, v in tgt.items()}
    X = np.array(rows, dtype=float).reshape(-1, len(names))
    return FeatureMatrix(kind, names, X, targets, ids, groups), skipped


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scaler:
    """Per-feature z-score transform; zero-variance columns use unit scale."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 2:
            raise InputError("standardization needs at least 2 rows")
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        return cls(mean, sd)

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def inverse_transform(self, Z):
        return np.asarray(Z, dtype=float) * self.scale + self.mean


def standardize(dataset):
    """Fit a z-score scaler and return ``(scaler, scaled)``.

    ``dataset`` is a sequence of FeatureVector (all of one set kind) or a 2-D
    array; the scaled result has the same form.
    """
    if isinstance(dataset, np.ndarray):
        scaler = Scaler.fit(dataset)
        return scaler, scaler.transform(dataset)
    vectors = list(dataset)
    kinds = {v.set_kind for v in vectors}
    if len(kinds) > 1:
        raise HeterogeneousSets(f"rows mix feature sets {sorted(k.value for k in kinds)}")
    X = np.array([v.values for v in vectors], dtype=float)
    scaler = Scaler.fit(X)
    Z = scaler.transform(X)
    out = [FeatureVector(v.set_kind, v.names, tuple(float(z) for z in row)) for v, row in zip(vectors, Z)]
    return scaler, out
