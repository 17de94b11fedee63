"""Versioned JSON container for fitted models.

Floats are written with their shortest round-trip representation, so a
save/load cycle reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json

from ..errors import InputError
from .forest import ForestModel
from .gbt import GbtModel
from .mlp import MlpModel
from .ridge import RidgeModel

FORMAT = "glucolens-model"
VERSION = 1


def _registry():
    from ..ensemble import SoftVoteEnsemble

    return {c.kind: c for c in (RidgeModel, ForestModel, GbtModel, MlpModel, SoftVoteEnsemble)}


def model_to_dict(model) -> dict:
    return {"format": FORMAT, "version": VERSION, "kind": model.kind, **model.to_dict()}


def model_from_dict(doc):
    if doc.get("format") != FORMAT:
        raise InputError("not a glucolens model file")
    if doc.get("version") != VERSION:
        raise InputError(f"unsupported model file version {doc.get('version')!r}")
    cls = _registry().get(doc.get("kind"))
    if cls is None:
        raise InputError(f"unknown model kind {doc.get('kind')!r}")
    return cls.from_dict(doc)


def dumps(model) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, allow_nan=False)


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(doc)
