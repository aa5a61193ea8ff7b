"""Procedural-noise universal adversarial perturbations with black-box
parameter search (Bayesian optimization, L-BFGS, random search)."""

from .engine import AttackSpec, attack_input_specific, attack_universal, evaluate_perturbation_set
from .image import Image, PerturbationField, apply, load_png, median_filter, save_png
from .ledger import QueryLedger
from .metrics import EvaluationGrid, GridRow
from .noise import (NoiseField, gabor_field, gabor_kernel, generate_field, perlin_field,
                    to_perturbation, uniform_random_field)
from .oracle import Oracle, OracleVerdict, ToyOracle, ToyOracleSpec, oracle_from_uri, with_median_defence
from .params import GaborParams, ParamSpace, PerlinParams

__version__ = "0.1.0"

__all__ = [
    "AttackSpec", "attack_input_specific", "attack_universal", "evaluate_perturbation_set",
    "Image", "PerturbationField", "apply", "load_png", "median_filter", "save_png",
    "QueryLedger", "EvaluationGrid", "GridRow",
    "NoiseField", "gabor_field", "gabor_kernel", "generate_field", "perlin_field",
    "to_perturbation", "uniform_random_field",
    "Oracle", "OracleVerdict", "ToyOracle", "ToyOracleSpec", "oracle_from_uri",
    "with_median_defence",
    "GaborParams", "ParamSpace", "PerlinParams",
    "__version__",
]
