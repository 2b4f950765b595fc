"""Query splits, mini-batch training with early stopping, evaluation and ablations."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .. import numerics as nx
from ..events import Query
from ..model import ModelConfig, InfNet, collate
from ..sampler import QuerySubgraph, SubgraphSampler
from .metrics import MetricResult, auc_pr, auc_roc, metric_result, stratify_cold_warm, UndefinedMetricError

log = logging.getLogger(__name__)


class SplitError(ValueError):
    pass


class TrainingDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class Split:
    """Indices into the query list. ``scheme`` describes how they were drawn."""

    train: tuple[int, ...]
    validation: tuple[int, ...]
    test: tuple[int, ...]
    scheme: str


def split_queries(queries: Sequence[Query], seed: int = 0, train_ratio: float = 0.7) -> Split:
    """Last step's queries are the test set; the rest are shuffled into train / validation."""
    tags = sorted({q.step for q in queries})
    if len(tags) < 3:
        raise SplitError(f"need queries from at least 3 steps, got steps {tags}")
    last = tags[-1]
    early = [i for i, q in enumerate(queries) if q.step != last]
    test = tuple(i for i, q in enumerate(queries) if q.step == last)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(early))
    n_train = int(round(train_ratio * len(early)))
    train = tuple(sorted(early[k] for k in perm[:n_train]))
    val = tuple(sorted(early[k] for k in perm[n_train:]))
    return Split(train, val, test, f"steps {tags[:-1]} shuffled {train_ratio:g}/{1 - train_ratio:g} seed={seed}; test step {last}")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 512
    max_epochs: int = 30
    patience: int = 5
    seed: int = 0


@dataclass
class QueryDataset:
    """Queries with their pre-sampled sub-graphs."""

    queries: list[Query]
    subgraphs: list[QuerySubgraph]
    node_dim: int
    n_bins: int

    @classmethod
    def build(cls, queries: Sequence[Query], sampler: SubgraphSampler) -> QueryDataset:
        return cls(list(queries), [sampler.sample(q) for q in queries], sampler.cfg.node_dim, sampler.cfg.n_bins)

    def labels(self, idx: Sequence[int]) -> np.ndarray:
        return np.array([self.queries[i].label for i in idx], dtype=float)

    def with_labels(self, labels: Sequence[int]) -> QueryDataset:
        """Copy whose queries and sub-graphs carry the given labels."""
        qs = [replace(q, label=int(y)) for q, y in zip(self.queries, labels)]
        sgs = [replace(sg, query=q) for sg, q in zip(self.subgraphs, qs)]
        return QueryDataset(qs, sgs, self.node_dim, self.n_bins)


def make_batches(
    idx: Sequence[int], data: QueryDataset, batch_size: int, rng: np.random.Generator | None = None
) -> list[list[int]]:
    """Batches of queries sharing one step count; shuffled when ``rng`` is given."""
    groups: dict[int, list[int]] = {}
    for i in idx:
        groups.setdefault(data.subgraphs[i].n_steps, []).append(i)
    batches = []
    for steps in sorted(groups):
        members = np.array(groups[steps])
        if rng is not None:
            members = members[rng.permutation(len(members))]
        batches += [members[k : k + batch_size].tolist() for k in range(0, len(members), batch_size)]
    if rng is not None:
        batches = [batches[k] for k in rng.permutation(len(batches))]
    return batches


def predict(model: InfNet, data: QueryDataset, idx: Sequence[int], batch_size: int = 512) -> np.ndarray:
    """Scores aligned with ``idx``."""
    out = np.zeros(len(idx))
    pos = {i: k for k, i in enumerate(idx)}
    for b in make_batches(idx, data, batch_size):
        scores = model.predict(collate([data.subgraphs[i] for i in b]))
        out[[pos[i] for i in b]] = scores
    return out


def evaluate(model: InfNet, data: QueryDataset, idx: Sequence[int], batch_size: int = 512) -> tuple[MetricResult, np.ndarray]:
    scores = predict(model, data, idx, batch_size)
    cold = [data.queries[i].cold for i in idx]
    return stratify_cold_warm(scores, data.labels(idx), cold), scores


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_auc_roc: float | None
    val_auc_pr: float | None
    seconds: float

    def line(self) -> str:
        fmt = lambda x: "n/a" if x is None else f"{x:.4f}"  # noqa: E731
        return (
            f"epoch {self.epoch:3d}  train_loss {self.train_loss:.5f}  val_loss {self.val_loss:.5f}"
            f"  val_roc {fmt(self.val_auc_roc)}  val_pr {fmt(self.val_auc_pr)}  {self.seconds:.1f}s"
        )


@dataclass
class TrainResult:
    model: InfNet
    best_epoch: int
    history: list[EpochLog]
    validation: MetricResult
    test: MetricResult
    test_scores: np.ndarray = field(repr=False)


def _bce(scores: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(scores, nx.BCE_EPS, 1.0 - nx.BCE_EPS)
    return float(-np.mean(labels * np.log(p) + (1 - labels) * np.log(1 - p)))


def train(
    model_cfg: ModelConfig,
    data: QueryDataset,
    split: Split,
    hyper: TrainConfig = TrainConfig(),
    on_epoch: Callable[[EpochLog], None] | None = None,
) -> TrainResult:
    """Adam on mean BCE; keeps the parameters with the best validation AUC-PR.

    Training stops after ``patience`` consecutive epochs without a new best
    (so ``patience=0`` runs exactly one epoch) or at ``max_epochs``.
    """
    if not split.train:
        raise SplitError("empty training set")
    seeds = np.random.SeedSequence(hyper.seed).spawn(2)
    model = InfNet(model_cfg, data.node_dim, data.n_bins, seed=int(seeds[0].generate_state(1)[0]))
    rng = np.random.default_rng(seeds[1])
    params = model.parameters()
    opt = nx.AdamState(lr=hyper.lr)
    val_labels = data.labels(split.validation)
    best, best_state, best_epoch, since = -math.inf, model.state_dict(), 0, 0
    history = []
    for epoch in range(1, hyper.max_epochs + 1):
        t0 = time.perf_counter()
        total, count = 0.0, 0
        for bi, b in enumerate(make_batches(split.train, data, hyper.batch_size, rng)):
            batch = collate([data.subgraphs[i] for i in b])
            y_hat, _ = model.forward(batch)
            loss = InfNet.loss(y_hat, batch.labels)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDivergence(f"loss became {value} at epoch {epoch}, batch {bi} (lr={hyper.lr})")
            for p in params:
                p.grad = None
            nx.backward(loss)
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
            if not all(np.isfinite(g).all() for g in grads):
                raise TrainingDivergence(f"non-finite gradient at epoch {epoch}, batch {bi}")
            nx.adam_step(params, grads, opt)
            total += value * len(b)
            count += len(b)
        val_scores = predict(model, data, split.validation, hyper.batch_size) if split.validation else np.zeros(0)
        try:
            roc, pr = auc_roc(val_scores, val_labels), auc_pr(val_scores, val_labels)
        except UndefinedMetricError:
            roc = pr = None
        entry = EpochLog(
            epoch, total / count, _bce(val_scores, val_labels) if len(val_labels) else math.nan, roc, pr, time.perf_counter() - t0
        )
        history.append(entry)
        log.info(entry.line())
        if on_epoch:
            on_epoch(entry)
        score = pr if pr is not None else -entry.val_loss
        if score > best:
            best, best_state, best_epoch, since = score, model.state_dict(), epoch, 0
        else:
            since += 1
        if since >= hyper.patience:
            break
    model.load_state_dict(best_state)
    val_res = metric_result(predict(model, data, split.validation), val_labels) if split.validation else metric_result([], [])
    test_res, test_scores = evaluate(model, data, split.test, hyper.batch_size)
    return TrainResult(model, best_epoch, history, val_res, test_res, test_scores)


VARIANTS: dict[str, dict] = {
    "encoder=none": {"encoder": "none"},
    "encoder=mean": {"encoder": "mean"},
    "encoder=gru": {"encoder": "gru"},
    "-user": {"masks": frozenset({"user"})},
    "-item": {"masks": frozenset({"item"})},
    "-taocode": {"masks": frozenset({"taocode"})},
    "-attention": {"use_edge_attention": False},
    "-structural": {"use_structural_block": False},
}


def variant_config(base: ModelConfig, name: str) -> ModelConfig:
    """Apply one named ablation (see :data:`VARIANTS`) or an ``encoder=<kind>`` switch."""
    if name in VARIANTS:
        change = dict(VARIANTS[name])
    elif name.startswith("encoder="):
        change = {"encoder": name.split("=", 1)[1]}
    else:
        raise KeyError(f"unknown ablation variant {name!r}; known: {', '.join(VARIANTS)}")
    if "masks" in change:
        change["masks"] = frozenset(base.masks) | change["masks"]
    return replace(base, **change)


@dataclass
class AblationRow:
    name: str
    config: ModelConfig
    result: TrainResult


def ablate(
    base: ModelConfig,
    variants: Sequence[str],
    data: QueryDataset,
    split: Split,
    hyper: TrainConfig = TrainConfig(),
    on_row: Callable[[AblationRow], None] | None = None,
) -> list[AblationRow]:
    """Base model plus one run per variant, all with the same seed and split."""
    rows = []
    for name, cfg in [("base", base)] + [(v, variant_config(base, v)) for v in variants]:
        row = AblationRow(name, cfg, train(cfg, data, split, hyper))
        rows.append(row)
        if on_row:
            on_row(row)
    return rows


def ablation_table(rows: Sequence[AblationRow]) -> str:
    fmt = lambda x: "n/a" if x is None else f"{x:.4f}"  # noqa: E731
    lines = [f"{'variant':16s} {'test_auc_pr':>11s} {'test_auc_roc':>12s} {'best_epoch':>10s}"]
    for r in rows:
        t = r.result.test
        lines.append(f"{r.name:16s} {fmt(t.auc_pr):>11s} {fmt(t.auc_roc):>12s} {r.result.best_epoch:10d}")
    return "\n".join(lines) + "\n"


def shuffled_labels(data: QueryDataset, idx: Sequence[int], seed: int) -> QueryDataset:
    """Permute labels among ``idx`` only (e.g. train and validation), leaving the rest intact."""
    labels = np.array([q.label for q in data.queries])
    idx = np.asarray(idx)
    labels[idx] = labels[idx][np.random.default_rng(seed).permutation(len(idx))]
    return data.with_labels(labels)
