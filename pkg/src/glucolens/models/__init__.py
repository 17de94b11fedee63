"""Trainable backbones: ridge, random forest, gradient-boosted trees and MLPs."""

from .forest import ForestModel, forest_fit
from .gbt import GbtModel, gbt_fit
from .mlp import VARIATIONS, MlpModel, gradient_check, mlp_fit
from .ridge import RidgeModel, ridge_fit

__all__ = [
    "ForestModel", "GbtModel", "MlpModel", "RidgeModel", "VARIATIONS",
    "forest_fit", "gbt_fit", "gradient_check", "mlp_fit", "ridge_fit",
]
