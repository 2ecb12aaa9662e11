"""Bi-level optimization, baselines, test-time adaptation, evaluation."""

from .adam import AdamState
from .adapt import AdaptResult, finetune, modulated_theta_snapshot
from .config import ADAPT_MODES, INNER_MODES, AdaptConfig, TrainConfig
from .evaluate import SampleMetrics, TaskEvaluation, evaluate, infer_sample
from .train import (
    TaskLogRecord,
    TrainingAbort,
    build_optimizer,
    inner_adapt,
    meta_train_epoch,
    sample_batch,
    run_training,
)

__all__ = [
    "ADAPT_MODES",
    "AdamState",
    "AdaptConfig",
    "AdaptResult",
    "INNER_MODES",
    "SampleMetrics",
    "TaskEvaluation",
    "TaskLogRecord",
    "TrainConfig",
    "TrainingAbort",
    "build_optimizer",
    "evaluate",
    "finetune",
    "infer_sample",
    "inner_adapt",
    "meta_train_epoch",
    "modulated_theta_snapshot",
    "sample_batch",
    "run_training",
]
