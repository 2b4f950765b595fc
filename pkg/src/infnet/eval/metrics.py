"""Ranking metrics for binary purchase prediction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata


class UndefinedMetricError(ValueError):
    pass


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length: {s.shape[0]} vs {y.shape[0]}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise UndefinedMetricError(f"need both classes, got {n_pos} positives out of {len(y)}")
    if np.isnan(s).any():
        raise ValueError("scores contain NaN")
    return s, y.astype(bool)


def auc_roc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve via the rank-sum statistic; tied pairs count one half."""
    s, y = _check(scores, labels)
    ranks = rankdata(s)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc_pr(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Step-wise area under the precision-recall curve.

    Thresholds sweep the distinct scores from high to low; each recall
    increment is weighted by the precision at that threshold.
    """
    s, y = _check(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(y)[last]
    precision = tp / (last + 1)
    recall = tp / y.sum()
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


@dataclass
class MetricResult:
    auc_roc: float | None
    auc_pr: float | None
    n: int
    n_pos: int
    strata: dict[str, MetricResult | None] = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {"auc_roc": self.auc_roc, "auc_pr": self.auc_pr, "n": self.n, "n_pos": self.n_pos}
        if self.strata:
            out["strata"] = {k: (v.as_dict() if v is not None else None) for k, v in self.strata.items()}
        return out


def metric_result(scores: Sequence[float], labels: Sequence[int]) -> MetricResult:
    """Both AUCs; ``None`` when a class is missing."""
    y = np.asarray(labels)
    try:
        roc, pr = auc_roc(scores, y), auc_pr(scores, y)
    except UndefinedMetricError:
        roc = pr = None
    return MetricResult(roc, pr, int(len(y)), int(y.sum()))


def stratify_cold_warm(scores: Sequence[float], labels: Sequence[int], cold: Sequence[bool]) -> MetricResult:
    """Overall metrics plus separate cold and warm results; empty strata are ``None``."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    c = np.asarray(cold, dtype=bool)
    res = metric_result(s, y)
    for name, mask in (("cold", c), ("warm", ~c)):
        res.strata[name] = metric_result(s[mask], y[mask]) if mask.any() else None
    return res
