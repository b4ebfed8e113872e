"""Eigenbehaviour biomarkers from ambient sensor logs."""

from .eigen import (
    EigenModel,
    ReconstructionErrorSeries,
    error_series,
    fit_eigenmodel,
    reconstruct,
    reconstruction_error,
)
from .ingest import (
    LOCATIONS,
    DayTimeline,
    SensorEvent,
    build_day_timelines,
    filter_days,
    parse_event_log,
)
from .kernels import BACKEND
from .matrix import BehaviourMatrix, Segmentation, build_behaviour_matrix
from .models import (
    CohortTable,
    classify_cohort,
    fit_linear_regression,
    grid_search,
    loo_rmsd,
    partial_correlation,
    train_svm,
)
from .synth import generate_cohort, generate_person

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "LOCATIONS",
    "BehaviourMatrix",
    "CohortTable",
    "DayTimeline",
    "EigenModel",
    "ReconstructionErrorSeries",
    "Segmentation",
    "SensorEvent",
    "build_behaviour_matrix",
    "build_day_timelines",
    "classify_cohort",
    "error_series",
    "filter_days",
    "fit_eigenmodel",
    "fit_linear_regression",
    "generate_cohort",
    "generate_person",
    "grid_search",
    "loo_rmsd",
    "parse_event_log",
    "partial_correlation",
    "reconstruct",
    "reconstruction_error",
    "train_svm",
]
