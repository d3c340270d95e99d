"""Grouped-convolution dynamic DNN: incremental training, width switching
at inference, and budget-driven operating-point selection."""

__version__ = "0.1.0"

from .backend import active_name, available_backends, set_backend
from .data import DataBundle, Dataset, load_archive, make_synthetic_raw, save_archive
from .errors import GdnnError
from .governor import (Budget, KnobSet, OperatingPoint, PlatformProfile,
                       dynamic_range, load_profile, pareto_frontier,
                       parse_knobs, save_profile, select_point)
from .model import (GroupModel, GroupNetArch, build_model, flops, forward,
                    model_size_bytes, param_count)
from .checkpoint import load_checkpoint, save_checkpoint
from .profiling import LatencyStats, profile_host, stats_to_profile
from .training import (TrainPlan, StepReport, evaluate_accuracy,
                       evaluate_confidence, run_full_training, select_seed,
                       train_increment)

__all__ = [
    "__version__", "GdnnError",
    "set_backend", "active_name", "available_backends",
    "Dataset", "DataBundle", "make_synthetic_raw", "save_archive", "load_archive",
    "GroupNetArch", "GroupModel", "build_model", "forward",
    "param_count", "model_size_bytes", "flops",
    "save_checkpoint", "load_checkpoint",
    "TrainPlan", "StepReport", "train_increment", "select_seed",
    "run_full_training", "evaluate_accuracy", "evaluate_confidence",
    "OperatingPoint", "PlatformProfile", "Budget", "KnobSet", "parse_knobs",
    "load_profile", "save_profile", "select_point", "pareto_frontier",
    "dynamic_range",
    "profile_host", "stats_to_profile", "LatencyStats",
]
