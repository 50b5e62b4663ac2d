"""Automated interpretation of obstetric sweep protocol recordings.

Frame-class probabilities and head masks in; fetus count, gestational age
(from head circumference) and fetal presentation out.
"""

from .biometry import HADLOCK_1984, GrowthCurve, fit_ellipse, measure_case
from .evaluation import run_cross_validation
from .forest import ForestParams, fit_forest, predict
from .frames import CaseRecord, FrameClass, read_case
from .pipeline import ModelBundle, interpret_batch, interpret_case, train_bundle, write_report
from .sweeps import SegmentationConfig, build_sweep_grid
from .synthetic import CorpusSpec, Scenario, generate_case, generate_corpus

__version__ = "0.1.0"

__all__ = [
    "HADLOCK_1984",
    "CaseRecord",
    "CorpusSpec",
    "ForestParams",
    "FrameClass",
    "GrowthCurve",
    "ModelBundle",
    "Scenario",
    "SegmentationConfig",
    "build_sweep_grid",
    "fit_ellipse",
    "fit_forest",
    "generate_case",
    "generate_corpus",
    "interpret_batch",
    "interpret_case",
    "measure_case",
    "predict",
    "read_case",
    "run_cross_validation",
    "train_bundle",
    "write_report",
]
