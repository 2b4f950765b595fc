"""Metrics, the logistic-regression baseline, training and ablations."""

from .baseline import LogisticRegression, LRFeatures, lr_baseline
from .metrics import MetricResult, UndefinedMetricError, auc_pr, auc_roc, metric_result, stratify_cold_warm
from .training import (
    VARIANTS,
    AblationRow,
    EpochLog,
    QueryDataset,
    Split,
    SplitError,
    TrainConfig,
    TrainingDivergence,
    TrainResult,
    ablate,
    ablation_table,
    evaluate,
    make_batches,
    predict,
    shuffled_labels,
    split_queries,
    train,
    variant_config,
)

__all__ = [
    "VARIANTS",
    "AblationRow",
    "EpochLog",
    "LRFeatures",
    "LogisticRegression",
    "MetricResult",
    "QueryDataset",
    "Split",
    "SplitError",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergence",
    "UndefinedMetricError",
    "ablate",
    "ablation_table",
    "auc_pr",
    "auc_roc",
    "evaluate",
    "lr_baseline",
    "make_batches",
    "metric_result",
    "predict",
    "shuffled_labels",
    "split_queries",
    "stratify_cold_warm",
    "train",
    "variant_config",
]
