"""Experiment orchestration, detection curves and result storage."""

from src.services.detection import detection_probability, roc_table
from src.services.experiment_service import ExperimentConfig, RunRecord, run_experiment, run_trial
from src.services.storage import ResultStore, summarize

__all__ = [
    "ExperimentConfig",
    "ResultStore",
    "RunRecord",
    "detection_probability",
    "roc_table",
    "run_experiment",
    "run_trial",
    "summarize",
]
