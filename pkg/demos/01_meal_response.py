"""
Scoring one meal from a glucose trace
=====================================

A CGM trace sampled every 15 minutes is turned into the three postprandial
targets, and the meal's macronutrients into a glycemic load.
"""

import datetime as dt

import numpy as np

from glucolens.features import glycemic_load
from glucolens.glycemic import (
    PostprandialWindow, baseline_at, compute_auc, compute_iauc, compute_max_bgl, resample_window,
)
from glucolens.ingest import CgmTrace, MacroProfile

# a lunch at 12:30 with a rise to about 165 mg/dL and a slow return
meal = dt.datetime(2024, 3, 4, 12, 30)
start = np.datetime64(meal, "m") - np.timedelta64(30, "m")
times = start + np.arange(17) * np.timedelta64(15, "m")
values = [96, 98, 101, 124, 151, 165, 158, 142, 128, 117, 108, 103, 100, 99, 98, 97, 97]
trace = CgmTrace.from_arrays("P01", times, values)

window = PostprandialWindow(meal, 180)
curve = resample_window(trace, window)
print("window samples (min, mg/dL):")
for t, g in zip(curve.t, curve.g):
    print(f"  {t:5.0f}  {g:6.1f}")

# the window integrals are exact for the linear interpolant between samples
print(f"AUC     {compute_auc(trace, window):9.1f} mg/dL*min")
print(f"iAUC    {compute_iauc(trace, window):9.1f} mg/dL*min above {baseline_at(trace, meal):.0f}")
print(f"max BGL {compute_max_bgl(trace, window):9.1f} mg/dL")

# glycemic load of the meal
lunch = MacroProfile(total_carbs=68, net_carbs=61, fat=22, protein=31, fiber=7)
print(f"glycemic load {glycemic_load(lunch):.2f}")
