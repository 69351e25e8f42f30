"""End-to-end loop: tuning, reporting, feature dropping and run tracking."""

from .loop import Iteration, PipelineHistory, feature_drop_loop, feature_scores, rank_and_drop, should_stop
from .metrics import ClassificationReport, classification_report, confusion_matrix
from .tracking import RunRecord, load_run, load_run_dir, run_dir, save_run
from .tuning import (
    SCHEDULING_GAMMA,
    TuneResult,
    default_search_space,
    make_objective,
    trial_params,
    tune,
    validation_metrics,
)

__all__ = [
    "ClassificationReport",
    "Iteration",
    "PipelineHistory",
    "RunRecord",
    "SCHEDULING_GAMMA",
    "TuneResult",
    "classification_report",
    "confusion_matrix",
    "default_search_space",
    "feature_drop_loop",
    "feature_scores",
    "load_run",
    "load_run_dir",
    "make_objective",
    "rank_and_drop",
    "run_dir",
    "save_run",
    "should_stop",
    "trial_params",
    "tune",
    "validation_metrics",
]
