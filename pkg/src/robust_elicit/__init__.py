"""Contamination-aware model validation: robust estimators, trimmed and
transformed test-loss aggregates, ranking errors and empirical breakdown
points, with simulation runners and a command line."""
from .datagen import CVScheme, Dataset, ScenarioConfig, preset
from .experiments import MetricRow, RunOptions, run
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "CVScheme", "Dataset", "MetricRow", "RunOptions", "ScenarioConfig", "preset", "run"]
