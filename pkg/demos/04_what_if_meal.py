"""
What would have kept this meal below 140 mg/dL?
===============================================

A forest classifier is trained on the synthetic cohort, and for one meal
it flags as hyperglycemic we search for three diverse nearby changes that
flip the call. BMI and weekday are held fixed.
"""

import numpy as np

from glucolens.counterfactuals import CfConstraints, diff_report, generate
from glucolens.features import Scaler, build_feature_matrix
from glucolens.models import forest_fit
from glucolens.synth import SynthCohortSpec, synth_cohort

matrix, _ = build_feature_matrix(synth_cohort(SynthCohortSpec(seed=0)), "all")
y = matrix.target("hyper").astype(int)
model = forest_fit(matrix.X, y, 50, task="classification", seed=0)

flagged = np.flatnonzero(model.predict(matrix.X) == 1)
row = int(flagged[0])
print(f"meal {row}: predicted hyperglycemic, observed label {y[row]}")

constraints = CfConstraints.from_training(matrix.X, matrix.names)
result = generate(model, matrix.vector(row), 0, k=3, constraints=constraints, seed=0)
print(diff_report(result))

# the scaler is not needed by the forest, but shows how far each change is in z units
z = Scaler.fit(matrix.X)
moves = z.transform(result.counterfactuals) - z.transform(matrix.X[row:row + 1])
for i, m in enumerate(moves):
    top = np.argsort(-np.abs(m))[:2]
    print(f"counterfactual {i + 1}: largest moves " +
          ", ".join(f"{matrix.names[j]} {m[j]:+.2f} sd" for j in top))
