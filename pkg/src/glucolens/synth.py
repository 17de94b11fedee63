"""Synthetic study cohorts with a planted postprandial response model.

Each participant is followed for six weeks: one Baseline week, two weeks of
Condition1, a one-week break and two weeks of Condition2. Work logs exist on
weekdays outside the break; CGM, activity events and meals cover every day.

Lunch response model (documented so acceptance thresholds are derivable)::

    height = intercept + carb_slope * net_carbs - fiber_slope * fiber
             - step_slope * work_step_minutes + bmi_slope * (bmi - 32.8)
             + N(0, noise_sd)

The excursion has the gamma-like shape ``height * (t/tau) * exp(1 - t/tau)``
(peak ``height`` at ``tau`` minutes) added on top of the day's glucose level.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .ingest import (
    ActivityEvent,
    ActivityEventLog,
    ActivityKind,
    CgmTrace,
    MacroProfile,
    MealKind,
    MealRecord,
    Phase,
    WorkdayRecord,
    assemble_participant,
)

# (phase or None for break) per study week
WEEK_PATTERN = (
    (Phase.Baseline,),
    (Phase.Condition1, Phase.Condition1),
    (None,),
    (Phase.Condition2, Phase.Condition2),
)

# bout probabilities (sit, stand, step) and mean bout minutes per context
_MIX = {
    "home": ((0.70, 0.20, 0.10), (25.0, 8.0, 3.0)),
    "Baseline": ((0.72, 0.18, 0.10), (22.0, 7.0, 3.0)),
    "Stand": ((0.40, 0.50, 0.10), (18.0, 20.0, 3.0)),
    "Move": ((0.45, 0.20, 0.35), (18.0, 7.0, 6.0)),
}
_KINDS = (ActivityKind.Sedentary, ActivityKind.Standing, ActivityKind.Stepping)


@dataclass(frozen=True)
class SynthCohortSpec:
    n_participants: int = 10
    seed: int = 0
    start_date: dt.date = dt.date(2024, 1, 8)  # a Monday
    bmi_mean: float = 32.8
    bmi_sd: float = 4.5
    intercept: float = 46.0
    carb_slope: float = 0.55
    fiber_slope: float = 2.2
    step_slope: float = 0.9
    bmi_slope: float = 1.0
    noise_sd: float = 6.0
    tau_min: float = 45.0
    weeks: tuple = field(default=WEEK_PATTERN)

    def __post_init__(self):
        if self.n_participants < 1:
            raise InputError("n_participants must be >= 1")
        for name in ("intercept", "carb_slope", "fiber_slope", "step_slope", "bmi_slope", "noise_sd"):
            if not np.isfinite(getattr(self, name)):
                raise InputError(f"{name} must be finite")

    def as_dict(self):
        return {
            "n_participants": self.n_participants, "seed": self.seed,
            "start_date": self.start_date.isoformat(), "bmi_mean": self.bmi_mean,
            "bmi_sd": self.bmi_sd, "intercept": self.intercept, "carb_slope": self.carb_slope,
            "fiber_slope": self.fiber_slope, "step_slope": self.step_slope,
            "bmi_slope": self.bmi_slope, "noise_sd": self.noise_sd, "tau_min": self.tau_min,
        }


def _fill_bouts(rng, start, end, context, out):
    """Append contiguous bouts covering [start, end) (datetimes)."""
    probs, means = _MIX[context]
    t = start
    while t < end:
        k = rng.choice(3, p=probs)
        minutes = max(1.0, round(rng.exponential(means[k])))
        stop = min(end, t + dt.timedelta(minutes=minutes))
        out.append(ActivityEvent(t, (stop - t).total_seconds(), _KINDS[k]))
        t = stop


def _excursion(t_rel, height, tau):
    x = np.clip(t_rel, 0.0, None) / tau
    return height * x * np.exp(1.0 - x)


def _study_days(spec):
    days = []
    d = spec.start_date
    for week in spec.weeks:
        for phase in week:
            for i in range(7):
                days.append((d, phase))
                d += dt.timedelta(days=1)
    return days


def _lunch_macros(rng):
    net = rng.uniform(20, 110)
    fiber = rng.uniform(0.5, 12)
    fat = rng.uniform(8, 45)
    protein = rng.uniform(10, 50)
    total = net + fiber
    sugar = total * rng.uniform(0.05, 0.35)
    calories = 4 * total + 9 * fat + 4 * protein
    return MacroProfile(
        calories=round(calories, 1), calories_from_fat=round(9 * fat, 1),
        saturated_fat=round(fat * rng.uniform(0.2, 0.45), 1), trans_fat=round(rng.uniform(0, 1), 1),
        cholesterol=round(rng.uniform(20, 150), 1), sodium=round(rng.uniform(400, 2000), 1),
        total_carbs=round(total, 1), sugar=round(sugar, 1), net_carbs=round(net, 1),
        fat=round(fat, 1), protein=round(protein, 1), fiber=round(fiber, 1),
    )


def _breakfast_macros(rng):
    net = rng.uniform(10, 45)
    fiber = rng.uniform(0, 5)
    fat = rng.uniform(2, 20)
    protein = rng.uniform(3, 25)
    total = net + fiber
    return MacroProfile(
        calories=round(4 * total + 9 * fat + 4 * protein, 1), calories_from_fat=round(9 * fat, 1),
        saturated_fat=round(fat * 0.3, 1), total_carbs=round(total, 1), sugar=round(net * 0.3, 1),
        net_carbs=round(net, 1), fat=round(fat, 1), protein=round(protein, 1), fiber=round(fiber, 1),
        sodium=round(rng.uniform(100, 700), 1), cholesterol=round(rng.uniform(0, 200), 1),
    )


def _participant(spec, pid, rng):
    bmi = float(np.clip(rng.normal(spec.bmi_mean, spec.bmi_sd), 18.0, 50.0))
    level = 88.0 + 0.6 * (bmi - spec.bmi_mean) + rng.normal(0, 4)
    stand_first = rng.random() < 0.5
    intervention = {
        Phase.Baseline: "Baseline",
        Phase.Condition1: "Stand" if stand_first else "Move",
        Phase.Condition2: "Move" if stand_first else "Stand",
    }
    days = _study_days(spec)
    events, meals, workdays = [], [], []
    n_samples = len(days) * 96
    t0 = dt.datetime.combine(spec.start_date, dt.time())
    grid = np.arange(n_samples) * 15.0  # minutes from t0
    glucose = np.empty(n_samples)
    excursions = np.zeros(n_samples)
    wfh_rate = rng.uniform(0.0, 0.4)

    for di, (day, phase) in enumerate(days):
        midnight = dt.datetime.combine(day, dt.time())
        day_level = level + rng.normal(0, 5)
        sl = slice(di * 96, (di + 1) * 96)
        hours = (grid[sl] - di * 1440) / 60.0
        glucose[sl] = day_level + 3.0 * np.cos((hours - 4.0) * np.pi / 12.0)

        is_workday = phase is not None and day.weekday() < 5
        wake = midnight + dt.timedelta(minutes=int(rng.integers(360, 420)))
        sleep = midnight + dt.timedelta(minutes=int(rng.integers(1320, 1400)))
        work_start_min = int(rng.integers(96, 114)) * 5  # 08:00-09:25
        work_start = midnight + dt.timedelta(minutes=work_start_min)
        lunch_min = int(rng.integers(144, 162)) * 5  # 12:00-13:25
        lunch = midnight + dt.timedelta(minutes=lunch_min)
        work_end = midnight + dt.timedelta(minutes=work_start_min + int(rng.integers(90, 102)) * 5)

        events.append(ActivityEvent(midnight, (wake - midnight).total_seconds(), ActivityKind.PrimaryLying))
        if is_workday:
            context = intervention[phase]
            wfh = bool(rng.random() < wfh_rate)
            _fill_bouts(rng, wake, work_start - dt.timedelta(minutes=30), "home", events)
            if wfh:
                _fill_bouts(rng, work_start - dt.timedelta(minutes=30), work_start, "home", events)
            else:
                events.append(ActivityEvent(work_start - dt.timedelta(minutes=30), 1800.0,
                                            ActivityKind.SeatedTransport))
            start_idx = len(events)
            _fill_bouts(rng, work_start, work_end, context, events)
            work_bouts = events[start_idx:]
            _fill_bouts(rng, work_end, sleep, "home", events)
        else:
            _fill_bouts(rng, wake, sleep, "home", events)
        events.append(ActivityEvent(sleep, (midnight + dt.timedelta(days=1) - sleep).total_seconds(),
                                    ActivityKind.PrimaryLying))

        breakfast = midnight + dt.timedelta(minutes=int(rng.integers(86, 100)) * 5)
        bmac = _breakfast_macros(rng)
        meals.append(MealRecord(pid, breakfast, MealKind.Breakfast, bmac))
        lmac = _lunch_macros(rng)
        meals.append(MealRecord(pid, lunch, MealKind.Lunch, lmac))

        step_to_lunch = 0.0
        if is_workday:
            for e in work_bouts:
                if e.kind is ActivityKind.Stepping:
                    a = max(e.start, work_start)
                    b = min(e.end, lunch)
                    step_to_lunch += max(0.0, (b - a).total_seconds()) / 60.0
            totals = np.zeros(3)
            for e in work_bouts:
                totals[_KINDS.index(e.kind)] += e.duration
            pct = 100.0 * totals / totals.sum()
            stand = float(np.clip(round(pct[1] + rng.normal(0, 4)), 0, 100))
            walk = float(np.clip(round(pct[2] + rng.normal(0, 3)), 0, 100 - stand))
            workdays.append(WorkdayRecord(
                pid, day, work_start_min, int((work_end - midnight).total_seconds() // 60), wfh,
                100.0 - stand - walk, stand, walk, phase,
            ))
        else:
            step_to_lunch = rng.uniform(5, 30)

        height = (spec.intercept + spec.carb_slope * lmac.net_carbs - spec.fiber_slope * lmac.fiber
                  - spec.step_slope * step_to_lunch + spec.bmi_slope * (bmi - spec.bmi_mean)
                  + rng.normal(0, spec.noise_sd))
        height = max(height, 3.0)
        b_height = max(4.0, 8.0 + 0.35 * bmac.net_carbs + rng.normal(0, 3))
        for when, h, tau in ((breakfast, b_height, 35.0), (lunch, height, spec.tau_min)):
            rel = grid - (when - t0).total_seconds() / 60.0
            near = (rel > 0) & (rel < 600)
            excursions[near] += _excursion(rel[near], h, tau)

    noise = np.zeros(n_samples)
    eps = rng.normal(0, 1.5, n_samples)
    for i in range(1, n_samples):
        noise[i] = 0.7 * noise[i - 1] + eps[i]
    values = np.clip(np.round(glucose + excursions + noise, 1), 40.0, 400.0)
    times = np.datetime64(t0, "m") + grid.astype(int).astype("timedelta64[m]")
    cgm = CgmTrace.from_arrays(pid, times, values)
    activity = ActivityEventLog(pid, tuple(events))
    return assemble_participant(pid, cgm, activity, meals, workdays, round(bmi, 2))


def synth_cohort(spec: SynthCohortSpec | None = None):
    """Generate ``spec.n_participants`` participants, deterministic in ``spec.seed``."""
    spec = spec or SynthCohortSpec()
    streams = np.random.SeedSequence(spec.seed).spawn(spec.n_participants)
    return [
        _participant(spec, f"P{i + 1:02d}", np.random.default_rng(s))
        for i, s in enumerate(streams)
    ]
