"""Measure verbatim memorization of training sequences and forecast a target
model's memorization behavior from cheaper predictors."""

from .core import (MASK_WIDTH, CheckpointSpec, FormatError, ModelSpec,
                   ScoreParams, Suite, Violation, validate_suite)
from .scorer import (MatchRecord, TokenRecord, is_extractible,
                     memorization_score, memorized_set, scan_tokens)
from .sets import MemorizedSet
from .predictor import (Confusion, common_support, compare_suites, confusion,
                        correlation_matrix, memorized_fraction,
                        phi_correlation, precision_recall)
from .scaling import (FrontierEntry, GridRow, Recommendation,
                      emergence_deviation, equi_compute_frontier, loglog_fit,
                      predictor_grid, recommend, training_cost)
from .distribution import (ScoreHistogram, TailFitReport, histogram,
                           spike_mass, tail_fit)
from .synth import SynthConfig, SynthModel, TailSpec, generate, ground_truth_check

__version__ = "0.1.0"

__all__ = [
    "MASK_WIDTH", "CheckpointSpec", "FormatError", "ModelSpec", "ScoreParams",
    "Suite", "Violation", "validate_suite",
    "MatchRecord", "TokenRecord", "is_extractible", "memorization_score",
    "memorized_set", "scan_tokens",
    "MemorizedSet",
    "Confusion", "common_support", "compare_suites", "confusion",
    "correlation_matrix", "memorized_fraction", "phi_correlation",
    "precision_recall",
    "FrontierEntry", "GridRow", "Recommendation", "emergence_deviation",
    "equi_compute_frontier", "loglog_fit", "predictor_grid", "recommend",
    "training_cost",
    "ScoreHistogram", "TailFitReport", "histogram", "spike_mass", "tail_fit",
    "SynthConfig", "SynthModel", "TailSpec", "generate", "ground_truth_check",
]
