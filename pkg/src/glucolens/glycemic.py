"""Postprandial glycemic targets from a CGM trace.

Glucose is treated as the piecewise-linear interpolant of the CGM samples, so
the trapezoid rule integrates it exactly. Units are mg/dL and minutes.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .errors import (
    GapTooLarge,
    InputError,
    InsufficientData,
    NoMorningSamples,
    NonPositiveBaseline,
    NoOvernightSamples,
)
from .ingest import CgmTrace

DEFAULT_WINDOW_MIN = 180.0
DEFAULT_MAX_GAP_MIN = 60.0
HYPER_THRESHOLD = 140.0
POLICIES = ("max_in_window", "at_2h")


@dataclass(frozen=True)
class PostprandialWindow:
    start: dt.datetime
    duration: float = DEFAULT_WINDOW_MIN

    def __post_init__(self):
        d = float(self.duration)
        if not (30.0 <= d <= 360.0):
            raise InputError(f"window duration must lie in [30, 360] min, got {d:g}")
        object.__setattr__(self, "duration", d)

    @property
    def start_minute(self) -> float:
        return float(np.datetime64(self.start, "m").astype(np.int64))

    @property
    def end_minute(self) -> float:
        return self.start_minute + self.duration


@dataclass(frozen=True)
class GlycemicTargets:
    auc: float
    iauc: float
    max_bgl: float
    hyperglycemic: bool
    baseline: float = float("nan")
    bgl_2h: float = float("nan")

    def __post_init__(self):
        if self.auc < 0 or self.iauc < 0 or self.max_bgl < 0:
            raise InputError("glycemic targets must be non-negative")
        if self.iauc > self.auc * (1 + 1e-12):
            raise InputError("iAUC cannot exceed AUC")


class PiecewiseLinear:
    """Linear interpolant through ``(t, g)`` knots, t in minutes from window start."""

    def __init__(self, t, g):
        self.t = np.asarray(t, dtype=float)
        self.g = np.asarray(g, dtype=float)

    def __call__(self, t):
        return np.interp(t, self.t, self.g)

    def integral(self) -> float:
        dt_ = np.diff(self.t)
        return float(np.sum(dt_ * (self.g[:-1] + self.g[1:]) / 2.0))

    def integral_above(self, level) -> float:
        """Exact integral of ``max(g - level, 0)``."""
        a = self.g[:-1] - level
        b = self.g[1:] - level
        w = np.diff(self.t)
        both = (a >= 0) & (b >= 0)
        area = np.where(both, w * (a + b) / 2.0, 0.0)
        # segments crossing the level contribute the triangle above it
        up = (a > 0) & (b < 0)
        down = (a < 0) & (b > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            area = np.where(up, w * a * a / (2.0 * (a - b)), area)
            area = np.where(down, w * b * b / (2.0 * (b - a)), area)
        return float(np.sum(area))

    def max(self) -> float:
        return float(np.max(self.g))


def resample_window(trace: CgmTrace, window: PostprandialWindow, max_gap=DEFAULT_MAX_GAP_MIN):
    """Restrict the trace's linear interpolant to the window.

    Requires a sample at or before the window start and one at or after its
    end; no gap between consecutive samples touching the window may exceed
    ``max_gap`` minutes.
    """
    m = trace.minutes
    g = trace.values
    t0, t1 = window.start_minute, window.end_minute
    if m.size < 2:
        raise InsufficientData("need at least 2 CGM samples")
    lo = np.searchsorted(m, t0, side="right") - 1  # last sample <= t0
    hi = np.searchsorted(m, t1, side="left")  # first sample >= t1
    if lo < 0 or hi >= m.size:
        raise InsufficientData(
            f"CGM trace does not cover the window {window.start} + {window.duration:g} min"
        )
    seg_m = m[lo:hi + 1]
    seg_g = g[lo:hi + 1]
    if seg_m.size >= 2:
        gaps = np.diff(seg_m)
        worst = float(gaps.max())
        if worst > max_gap:
            raise GapTooLarge(f"{worst:g}-min gap inside window exceeds {max_gap:g} min")
    inner = (seg_m > t0) & (seg_m < t1)
    knots_t = np.concatenate(([t0], seg_m[inner], [t1])) - t0
    knots_g = np.concatenate(
        ([np.interp(t0, seg_m, seg_g)], seg_g[inner], [np.interp(t1, seg_m, seg_g)])
    )
    return PiecewiseLinear(knots_t, knots_g)


def compute_auc(trace, window, max_gap=DEFAULT_MAX_GAP_MIN) -> float:
    return resample_window(trace, window, max_gap).integral()


def baseline_at(trace, when: dt.datetime, max_gap=DEFAULT_MAX_GAP_MIN) -> float:
    """CGM value linearly interpolated at ``when`` (pre-meal level)."""
    m = trace.minutes
    t = float(np.datetime64(when, "m").astype(np.int64))
    lo = np.searchsorted(m, t, side="right") - 1
    hi = np.searchsorted(m, t, side="left")
    if lo < 0 or hi >= m.size:
        raise InsufficientData(f"no CGM samples around {when}")
    if m[hi] - m[lo] > max_gap:
        raise GapTooLarge(f"gap around {when} exceeds {max_gap:g} min")
    return float(np.interp(t, m, trace.values))


def compute_iauc(trace, window, baseline=None, max_gap=DEFAULT_MAX_GAP_MIN) -> float:
    """Area above ``baseline`` with below-baseline excursions clipped to zero.

    ``baseline`` defaults to the CGM value interpolated at the window start.
    """
    f = resample_window(trace, window, max_gap)
    if baseline is None:
        baseline = float(f.g[0])
    if not baseline > 0:
        raise NonPositiveBaseline(f"baseline must be positive, got {baseline}")
    return f.integral_above(baseline)


def compute_max_bgl(trace, window, max_gap=DEFAULT_MAX_GAP_MIN) -> float:
    return resample_window(trace, window, max_gap).max()


def _day_values(trace, date, start_h, end_h):
    base = float(np.datetime64(date, "m").astype(np.int64))
    m = trace.minutes
    lo = np.searchsorted(m, base + start_h * 60, side="left")
    hi = np.searchsorted(m, base + end_h * 60, side="right")
    return trace.values[lo:hi]


def fasting_glucose(trace, date: dt.date) -> float:
    """Minimum raw CGM reading between 06:00 and 10:00 of ``date``."""
    vals = _day_values(trace, date, 6, 10)
    if vals.size == 0:
        raise NoMorningSamples(f"no CGM samples between 06:00 and 10:00 on {date}")
    return float(vals.min())


def recent_cgm(trace, date: dt.date) -> float:
    """Mean raw CGM reading from midnight to 08:00 of ``date``."""
    vals = _day_values(trace, date, 0, 8)
    if vals.size == 0:
        raise NoOvernightSamples(f"no CGM samples between 00:00 and 08:00 on {date}")
    return float(vals.mean())


def label_hyperglycemia(targets: GlycemicTargets, threshold=HYPER_THRESHOLD, policy="max_in_window") -> bool:
    if not threshold > 0:
        raise InputError("threshold must be positive")
    if policy == "max_in_window":
        return bool(targets.max_bgl >= threshold)
    if policy == "at_2h":
        if not np.isfinite(targets.bgl_2h):
            raise InsufficientData("2-hour reading unavailable")
        return bool(targets.bgl_2h >= threshold)
    raise InputError(f"unknown hyperglycemia policy {policy!r}")


def glycemic_targets(
    trace,
    meal_time: dt.datetime,
    duration=DEFAULT_WINDOW_MIN,
    max_gap=DEFAULT_MAX_GAP_MIN,
    threshold=HYPER_THRESHOLD,
    policy="max_in_window",
) -> GlycemicTargets:
    """AUC, iAUC, MaxBGL and the hyperglycemia label for one meal."""
    window = PostprandialWindow(meal_time, duration)
    f = resample_window(trace, window, max_gap)
    baseline = float(f.g[0])
    auc = f.integral()
    iauc = f.integral_above(baseline)
    bgl_2h = float(f(120.0)) if duration >= 120 else float("nan")
    provisional = GlycemicTargets(auc, iauc, f.max(), False, baseline, bgl_2h)
    hyper = label_hyperglycemia(provisional, threshold, policy)
    return GlycemicTargets(auc, iauc, f.max(), hyper, baseline, bgl_2h)
