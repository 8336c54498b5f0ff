"""Retraining triggers for KPI forecasters driven by generative models."""

from .detectors import GanDetector, LofDetector, ThresholdDetector, VaeDetector, Verdict, VerdictKind, Window
from .errors import GenRetrainError
from .harness import HarnessConfig, compare_detectors, compute_mrpt, compute_mrtt, run_scenario, train_models
from .stats import ks_two_sample, lof

__version__ = "0.1.0"

__all__ = [
    "GanDetector", "LofDetector", "ThresholdDetector", "VaeDetector", "Verdict", "VerdictKind", "Window",
    "GenRetrainError", "HarnessConfig", "compare_detectors", "compute_mrpt", "compute_mrtt",
    "run_scenario", "train_models", "ks_two_sample", "lof",
]
