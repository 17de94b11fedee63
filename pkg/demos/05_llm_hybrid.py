"""
Adding language-model estimates as features
===========================================

Each meal's features are written into a prompt, sent to six offline mock
providers, and the parsed numbers become extra columns for a forest
regressor. Nothing here touches the network; answers are cached on disk.
"""

import os
import tempfile

import numpy as np

from glucolens.ensemble import run_hybrid_regression
from glucolens.evaluation import SplitSpec, nrmse, split_indices
from glucolens.features import build_feature_matrix
from glucolens.llm import LlmCache, PromptTemplate, build_prompt, default_mock_providers, predict_rows
from glucolens.synth import SynthCohortSpec, synth_cohort

matrix, _ = build_feature_matrix(synth_cohort(SynthCohortSpec(n_participants=4, seed=0)), "all")
template = PromptTemplate.default()
print(build_prompt(template, matrix.vector(0)))

vectors = [matrix.vector(i) for i in range(len(matrix))]
cache_path = os.path.join(tempfile.mkdtemp(), "llm_cache.json")
columns, refused = predict_rows(default_mock_providers(seed=0), vectors, "auc", template, LlmCache(cache_path))
print(f"columns from {sorted(columns)}; refused: {refused or 'none'}")

train, test = split_indices(len(matrix), SplitSpec("fraction", test_fraction=0.2, seed=0))
y = matrix.target("auc")
for mode in ("gly_base", "gly_llm", "gly_hybrid", "gly_hybrid_v2"):
    res = run_hybrid_regression(mode, matrix, columns, train, test, backbone="rf", seed=0,
                                backbone_params={"n_estimators": 50})
    print(f"{mode:<14} {len(res.feature_names):>3} features  NRMSE {nrmse(y[test], res.predictions):.3f}")
