"""Parsing and validation of the four raw data sources.

All inputs are comma-separated text with fixed headers. Timestamps are local
wall-clock times without timezone; no DST arithmetic is ever applied.

Each record type validates its own invariants on construction, so anything
returned from this module is guaranteed consistent.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BmiOutOfRange,
    EmptyTrace,
    IdMismatch,
    InputError,
    MalformedRow,
    NegativeMacro,
    NetCarbExceedsTotal,
    OutOfRange,
    OverlappingEvents,
    PercentSumExceeded,
    StartAfterEnd,
    UnknownActivityKind,
)

GLUCOSE_MIN = 20.0
GLUCOSE_MAX = 600.0
BMI_MIN = 10.0
BMI_MAX = 80.0
OVERLAP_TOLERANCE_S = 1.0
PERCENT_SLACK = 1.0

CGM_HEADER = ["timestamp", "glucose_mgdl"]
ACTIVITY_HEADER = ["start", "duration_s", "kind"]
FOOD_HEADER = [
    "participant", "date", "meal_time", "kind", "calories", "cal_fat",
    "sat_fat_g", "trans_fat_g", "cholesterol_mg", "sodium_mg", "total_carbs_g",
    "sugar_g", "net_carbs_g", "fat_g", "protein_g", "fiber_g",
]
WORK_HEADER = [
    "participant", "date", "work_start", "work_end", "wfh", "pct_sit",
    "pct_stand", "pct_walk", "phase",
]
PARTICIPANTS_HEADER = ["participant", "bmi"]

_MINUTE = np.timedelta64(1, "m")


def _norm_token(text):
    return text.strip().lower().replace(" ", "").replace("_", "").replace("-", "")


class _ParsableEnum(enum.Enum):
    @classmethod
    def parse(cls, text):
        key = _norm_token(text)
        for member in cls:
            if _norm_token(member.name) == key:
                return member
        raise ValueError(text)

    @property
    def token(self):
        """snake_case name used in files."""
        out = []
        for i, ch in enumerate(self.name):
            if ch.isupper() and i:
                out.append("_")
            out.append(ch.lower())
        return "".join(out)


class ActivityKind(_ParsableEnum):
    Sedentary = 0
    Standing = 1
    Stepping = 2
    Cycling = 3
    PrimaryLying = 4
    SecondaryLying = 5
    SeatedTransport = 6


class MealKind(_ParsableEnum):
    Breakfast = 0
    Lunch = 1
    Dinner = 2
    Snack = 3


class Phase(_ParsableEnum):
    Baseline = 0
    Condition1 = 1
    Condition2 = 2


# ---------------------------------------------------------------------------
# record types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CgmSample:
    timestamp: dt.datetime
    glucose: float

    def __post_init__(self):
        if self.timestamp.second or self.timestamp.microsecond:
            raise InputError(f"CGM timestamp {self.timestamp} is not minute-aligned")
        if self.timestamp.tzinfo is not None:
            raise InputError("CGM timestamps must be timezone-naive local time")
        g = float(self.glucose)
        if not (GLUCOSE_MIN <= g <= GLUCOSE_MAX):
            raise OutOfRange(f"glucose {g} outside [{GLUCOSE_MIN}, {GLUCOSE_MAX}] mg/dL")
        object.__setattr__(self, "glucose", g)


@dataclass(frozen=True)
class CgmTrace:
    participant_id: str
    samples: tuple[CgmSample, ...]

    def __post_init__(self):
        samples = tuple(self.samples)
        object.__setattr__(self, "samples", samples)
        for a, b in zip(samples, samples[1:]):
            if not a.timestamp < b.timestamp:
                raise InputError("CGM samples must be strictly increasing in time")

    def __len__(self):
        return len(self.samples)

    @cached_property
    def times(self) -> np.ndarray:
        """Sample times as ``datetime64[m]``."""
        return np.array([s.timestamp for s in self.samples], dtype="datetime64[m]")

    @cached_property
    def minutes(self) -> np.ndarray:
        """Sample times as float minutes since the epoch."""
        return self.times.astype(np.int64).astype(float)

    @cached_property
    def values(self) -> np.ndarray:
        return np.array([s.glucose for s in self.samples], dtype=float)

    @classmethod
    def from_arrays(cls, participant_id, times, glucose):
        times = np.asarray(times, dtype="datetime64[m]")
        samples = tuple(
            CgmSample(t.astype(dt.datetime), float(g)) for t, g in zip(times, glucose)
        )
        return cls(participant_id, samples)


@dataclass(frozen=True)
class ActivityEvent:
    start: dt.datetime
    duration: float
    kind: ActivityKind

    def __post_init__(self):
        if not isinstance(self.kind, ActivityKind):
            raise UnknownActivityKind(f"unknown activity kind {self.kind!r}")
        d = float(self.duration)
        if not np.isfinite(d) or d < 0:
            raise InputError(f"activity duration must be >= 0, got {d}")
        object.__setattr__(self, "duration", d)

    @property
    def end(self):
        return self.start + dt.timedelta(seconds=self.duration)


@dataclass(frozen=True)
class ActivityEventLog:
    participant_id: str
    events: tuple[ActivityEvent, ...]

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        for i, (a, b) in enumerate(zip(events, events[1:])):
            if b.start < a.start:
                raise InputError("activity events must be sorted by start")
            overlap = (a.end - b.start).total_seconds()
            if overlap > OVERLAP_TOLERANCE_S:
                raise OverlappingEvents(
                    f"events {i} and {i + 1} overlap by {overlap:.0f} s"
                )

    def __len__(self):
        return len(self.events)

    @cached_property
    def starts(self) -> np.ndarray:
        """Event starts as float seconds since the epoch."""
        return np.array(
            [np.datetime64(e.start, "s").astype(np.int64) for e in self.events], dtype=float
        )

    @cached_property
    def durations(self) -> np.ndarray:
        return np.array([e.duration for e in self.events], dtype=float)

    @cached_property
    def kinds(self) -> np.ndarray:
        return np.array([e.kind.value for e in self.events], dtype=int)


MACRO_FIELDS = (
    "calories", "calories_from_fat", "saturated_fat", "trans_fat", "cholesterol",
    "sodium", "total_carbs", "sugar", "net_carbs", "fat", "protein", "fiber",
)


@dataclass(frozen=True)
class MacroProfile:
    calories: float = 0.0
    calories_from_fat: float = 0.0
    saturated_fat: float = 0.0
    trans_fat: float = 0.0
    cholesterol: float = 0.0
    sodium: float = 0.0
    total_carbs: float = 0.0
    sugar: float = 0.0
    net_carbs: float = 0.0
    fat: float = 0.0
    protein: float = 0.0
    fiber: float = 0.0

    def __post_init__(self):
        for name in MACRO_FIELDS:
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise NegativeMacro(f"{name} must be a non-negative number, got {v}")
            object.__setattr__(self, name, v)
        if self.net_carbs > self.total_carbs:
            raise NetCarbExceedsTotal(
                f"net carbs {self.net_carbs} exceed total carbs {self.total_carbs}"
            )
        if self.calories_from_fat > self.calories:
            raise InputError(
                f"calories from fat {self.calories_from_fat} exceed calories {self.calories}"
            )

    def as_tuple(self):
        return tuple(getattr(self, n) for n in MACRO_FIELDS)


@dataclass(frozen=True)
class MealRecord:
    participant_id: str
    meal_time: dt.datetime
    meal_kind: MealKind
    macros: MacroProfile
    # The food log carries no phase column; it is resolved from the work log
    # by ``assemble_participant``.
    phase: Phase | None = None

    @property
    def date(self):
        return self.meal_time.date()


@dataclass(frozen=True)
class WorkdayRecord:
    participant_id: str
    date: dt.date
    work_start: int
    work_end: int
    work_from_home: bool
    pct_sitting: float
    pct_standing: float
    pct_walking: float
    phase: Phase

    def __post_init__(self):
        for name in ("pct_sitting", "pct_standing", "pct_walking"):
            v = float(getattr(self, name))
            if not (0.0 <= v <= 100.0):
                raise InputError(f"{name} must lie in [0, 100], got {v}")
            object.__setattr__(self, name, v)
        total = self.pct_sitting + self.pct_standing + self.pct_walking
        if total > 100.0 + PERCENT_SLACK:
            raise PercentSumExceeded(f"activity percentages sum to {total:g} > 100")
        if not self.work_start < self.work_end:
            raise StartAfterEnd(
                f"work start {_fmt_hhmm(self.work_start)} is not before end {_fmt_hhmm(self.work_end)}"
            )
        if not (0 <= self.work_start < 24 * 60 and 0 < self.work_end <= 24 * 60):
            raise InputError("work times must fall within the day")

    @property
    def work_start_datetime(self):
        return dt.datetime.combine(self.date, dt.time()) + dt.timedelta(minutes=self.work_start)


@dataclass(frozen=True)
class ParticipantData:
    participant_id: str
    bmi: float
    cgm: CgmTrace
    activity: ActivityEventLog
    meals: tuple[MealRecord, ...]
    workdays: tuple[WorkdayRecord, ...]
    # meal index -> reason the meal is excluded from modeling
    flagged_meals: dict = field(default_factory=dict)

    def workday_on(self, date):
        return self._workday_index.get(date)

    @cached_property
    def _workday_index(self):
        return {w.date: w for w in self.workdays}

    def modeling_lunches(self):
        """Lunch records that have a same-day workday and no flags."""
        return [
            m for i, m in enumerate(self.meals)
            if m.meal_kind is MealKind.Lunch and i not in self.flagged_meals
        ]


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------


def _rows(stream, header, source):
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        first = next(reader)
    except StopIteration:
        raise MalformedRow("empty input, expected header", line=1, source=source) from None
    if [h.strip() for h in first] != header:
        raise MalformedRow(
            f"bad header {','.join(first)!r}, expected {','.join(header)!r}",
            line=1, source=source,
        )
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise MalformedRow(
                f"expected {len(header)} fields, got {len(row)}", line=lineno, source=source
            )
        yield lineno, [c.strip() for c in row]


def _parse_datetime(text):
    return dt.datetime.fromisoformat(text.replace("T", " "))


def _parse_hhmm(text):
    hh, mm = text.split(":")
    hh, mm = int(hh), int(mm)
    if not (0 <= hh <= 24 and 0 <= mm < 60) or (hh == 24 and mm):
        raise ValueError(text)
    return hh * 60 + mm


def _fmt_hhmm(minutes):
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


def _fmt_float(x):
    return repr(float(x))


_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f"}


def _parse_bool(text):
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(text)


# ---------------------------------------------------------------------------
# public parsers
# ---------------------------------------------------------------------------


def parse_cgm(stream, participant_id, source=None) -> CgmTrace:
    """Parse a ``timestamp,glucose_mgdl`` file into a sorted trace.

    Duplicate timestamps keep the first row seen in file order.
    """
    seen = {}
    for lineno, (ts, g) in _rows(stream, CGM_HEADER, source):
        try:
            t = _parse_datetime(ts)
            value = float(g)
        except ValueError as exc:
            raise MalformedRow(str(exc), line=lineno, source=source) from None
        if not np.isfinite(value):
            raise MalformedRow(f"non-finite glucose {g!r}", line=lineno, source=source)
        if not (GLUCOSE_MIN <= value <= GLUCOSE_MAX):
            raise OutOfRange(
                f"glucose {value:g} outside [{GLUCOSE_MIN:g}, {GLUCOSE_MAX:g}] mg/dL",
                line=lineno, source=source,
            )
        try:
            sample = CgmSample(t, value)
        except InputError as exc:
            raise MalformedRow(str(exc), line=lineno, source=source) from None
        seen.setdefault(t, sample)
    if not seen:
        raise EmptyTrace("CGM file contains no samples", source=source)
    return CgmTrace(participant_id, tuple(seen[t] for t in sorted(seen)))


def parse_activity_events(stream, participant_id, source=None) -> ActivityEventLog:
    events = []
    for lineno, (start, dur, kind) in _rows(stream, ACTIVITY_HEADER, source):
        try:
            k = ActivityKind.parse(kind)
        except ValueError:
            raise UnknownActivityKind(
                f"unknown activity kind {kind!r}", line=lineno, source=source
            ) from None
        try:
            ev = ActivityEvent(_parse_datetime(start), float(dur), k)
        except (ValueError, InputError) as exc:
            raise MalformedRow(str(exc), line=lineno, source=source) from None
        events.append((ev.start, lineno, ev))
    events.sort(key=lambda item: (item[0], item[1]))
    ordered = [ev for _, _, ev in events]
    for i, (a, b) in enumerate(zip(ordered, ordered[1:])):
        overlap = (a.end - b.start).total_seconds()
        if overlap > OVERLAP_TOLERANCE_S:
            raise OverlappingEvents(
                f"event at {b.start} overlaps the previous event by {overlap:.0f} s",
                line=events[i + 1][1], source=source,
            )
    return ActivityEventLog(participant_id, tuple(ordered))


def parse_food_log(stream, source=None) -> list[MealRecord]:
    """Parse digitized food-log rows (leftovers already netted out)."""
    meals = []
    for lineno, row in _rows(stream, FOOD_HEADER, source):
        pid, date, meal_time, kind = row[:4]
        try:
            day = dt.date.fromisoformat(date)
            when = dt.datetime.combine(day, dt.time()) + dt.timedelta(minutes=_parse_hhmm(meal_time))
            mk = MealKind.parse(kind)
            values = [float(v) for v in row[4:]]
        except ValueError as exc:
            raise MalformedRow(f"bad value: {exc}", line=lineno, source=source) from None
        try:
            macros = MacroProfile(*values)
        except NegativeMacro as exc:
            raise NegativeMacro(str(exc), line=lineno, source=source) from None
        except NetCarbExceedsTotal as exc:
            raise NetCarbExceedsTotal(str(exc), line=lineno, source=source) from None
        except InputError as exc:
            raise MalformedRow(str(exc), line=lineno, source=source) from None
        meals.append(MealRecord(pid, when, mk, macros))
    meals.sort(key=lambda m: (m.participant_id, m.meal_time, m.meal_kind.value))
    return meals


def parse_work_log(stream, source=None) -> list[WorkdayRecord]:
    records = []
    for lineno, row in _rows(stream, WORK_HEADER, source):
        pid, date, start, end, wfh, sit, stand, walk, phase = row
        try:
            rec_args = dict(
                participant_id=pid,
                date=dt.date.fromisoformat(date),
                work_start=_parse_hhmm(start),
                work_end=_parse_hhmm(end),
                work_from_home=_parse_bool(wfh),
                pct_sitting=float(sit),
                pct_standing=float(stand),
                pct_walking=float(walk),
                phase=Phase.parse(phase),
            )
        except ValueError as exc:
            raise MalformedRow(f"bad value: {exc}", line=lineno, source=source) from None
        try:
            records.append(WorkdayRecord(**rec_args))
        except (PercentSumExceeded, StartAfterEnd) as exc:
            raise type(exc)(str(exc), line=lineno, source=source) from None
        except InputError as exc:
            raise MalformedRow(str(exc), line=lineno, source=source) from None
    records.sort(key=lambda r: (r.participant_id, r.date))
    return records


def parse_participants(stream, source=None) -> dict[str, float]:
    """Parse the ``participant,bmi`` roster."""
    out = {}
    for lineno, (pid, bmi) in _rows(stream, PARTICIPANTS_HEADER, source):
        try:
            out[pid] = float(bmi)
        except ValueError as exc:
            raise MalformedRow(str(exc), line=lineno, source=source) from None
    return out


def assemble_participant(participant_id, cgm, activity, meals, workdays, bmi) -> ParticipantData:
    """Cross-validate one participant's records into a bundle.

    Meals are given the phase of their same-day workday. Meals without one
    (weekends, days off) are kept but flagged, which excludes them from
    modeling.
    """
    if cgm.participant_id != participant_id:
        raise IdMismatch(f"CGM trace belongs to {cgm.participant_id!r}, not {participant_id!r}")
    if activity.participant_id != participant_id:
        raise IdMismatch(
            f"activity log belongs to {activity.participant_id!r}, not {participant_id!r}"
        )
    for m in meals:
        if m.participant_id != participant_id:
            raise IdMismatch(f"meal of {m.participant_id!r} under participant {participant_id!r}")
    for w in workdays:
        if w.participant_id != participant_id:
            raise IdMismatch(f"workday of {w.participant_id!r} under participant {participant_id!r}")
    bmi = float(bmi)
    if not (BMI_MIN <= bmi <= BMI_MAX):
        raise BmiOutOfRange(f"BMI {bmi:g} outside [{BMI_MIN:g}, {BMI_MAX:g}]")

    workdays = tuple(sorted(workdays, key=lambda w: w.date))
    dates = [w.date for w in workdays]
    if len(set(dates)) != len(dates):
        raise InputError(f"participant {participant_id!r} has duplicate workday dates")
    by_date = {w.date: w for w in workdays}
    first_day = cgm.samples[0].timestamp.date() if len(cgm) else None
    last_day = cgm.samples[-1].timestamp.date() if len(cgm) else None

    resolved = []
    flags = {}
    for i, m in enumerate(sorted(meals, key=lambda m: (m.meal_time, m.meal_kind.value))):
        w = by_date.get(m.date)
        if w is not None:
            m = MealRecord(m.participant_id, m.meal_time, m.meal_kind, m.macros, w.phase)
        else:
            flags[i] = "no same-day workday"
        if first_day is not None and not (first_day <= m.date <= last_day):
            flags[i] = "outside study window"
        resolved.append(m)
    return ParticipantData(
        participant_id, bmi, cgm, activity, tuple(resolved), workdays, flags
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _write_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def format_cgm(trace: CgmTrace) -> str:
    return _write_csv(
        CGM_HEADER,
        ([s.timestamp.strftime("%Y-%m-%d %H:%M"), _fmt_float(s.glucose)] for s in trace.samples),
    )


def format_activity_events(log: ActivityEventLog) -> str:
    return _write_csv(
        ACTIVITY_HEADER,
        ([e.start.isoformat(sep=" "), _fmt_float(e.duration), e.kind.token] for e in log.events),
    )


def format_food_log(meals: Iterable[MealRecord]) -> str:
    rows = []
    for m in meals:
        rows.append(
            [m.participant_id, m.date.isoformat(), m.meal_time.strftime("%H:%M"), m.meal_kind.token]
            + [_fmt_float(v) for v in m.macros.as_tuple()]
        )
    return _write_csv(FOOD_HEADER, rows)


def format_work_log(workdays: Iterable[WorkdayRecord]) -> str:
    rows = []
    for w in workdays:
        rows.append([
            w.participant_id, w.date.isoformat(), _fmt_hhmm(w.work_start), _fmt_hhmm(w.work_end),
            "1" if w.work_from_home else "0", _fmt_float(w.pct_sitting),
            _fmt_float(w.pct_standing), _fmt_float(w.pct_walking), w.phase.token,
        ])
    return _write_csv(WORK_HEADER, rows)


def format_participants(participants: Sequence[ParticipantData]) -> str:
    return _write_csv(PARTICIPANTS_HEADER, ([p.participant_id, _fmt_float(p.bmi)] for p in participants))


def dump_dataset(participants: Sequence[ParticipantData]) -> str:
    """Serialize assembled participants to a single JSON document."""
    doc = {
        "format": "glucolens-dataset",
        "version": 1,
        "participants": [
            {
                "id": p.participant_id,
                "bmi": p.bmi,
                "cgm": format_cgm(p.cgm),
                "activity": format_activity_events(p.activity),
                "food": format_food_log(p.meals),
                "work": format_work_log(p.workdays),
            }
            for p in participants
        ],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def load_dataset(text: str) -> list[ParticipantData]:
    doc = json.loads(text)
    if doc.get("format") != "glucolens-dataset" or doc.get("version") != 1:
        raise InputError("not a glucolens dataset file (format/version mismatch)")
    out = []
    for p in doc["participants"]:
        pid = p["id"]
        out.append(
            assemble_participant(
                pid,
                parse_cgm(p["cgm"], pid),
                parse_activity_events(p["activity"], pid),
                parse_food_log(p["food"]),
                parse_work_log(p["work"]),
                p["bmi"],
            )
        )
    return out
