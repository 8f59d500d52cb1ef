"""Inference-time fairness guardrail for tabular binary classifiers."""

__version__ = "0.1.0"

from .classifier import ForestConfig, ForestModel, FunctionPredictor, Predictor, train_forest
from .dataset import Column, Dataset, Schema, fit_standardizer, kfold_split, load_dataset, load_schema
from .generator import SyntheticPool, fit_native_sampler, generate, load_external_pool
from .guardrail import BiasGuard, GuardrailConfig, guard_batch, guard_predict

__all__ = [
    "BiasGuard",
    "Column",
    "Dataset",
    "ForestConfig",
    "ForestModel",
    "FunctionPredictor",
    "GuardrailConfig",
    "Predictor",
    "Schema",
    "SyntheticPool",
    "fit_native_sampler",
    "fit_standardizer",
    "generate",
    "guard_batch",
    "guard_predict",
    "kfold_split",
    "load_dataset",
    "load_external_pool",
    "load_schema",
    "train_forest",
]
