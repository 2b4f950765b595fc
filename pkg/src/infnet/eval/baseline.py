"""Logistic-regression baseline on hand-built local features.

Features of a query ``(u, p, i)`` use only data before step ``i``:

* one-hot price bin of ``p``;
* ``log1p`` of ``u``'s spend (summed price index) over the last 30 days;
* ``log1p`` of ``u``'s distinct in- and out-neighbors on steps ``< i``;
* ``log1p`` of the items ``u`` shared and received per price bin on steps ``< i``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..events import DynamicNetwork, ItemCatalog, PurchaseIndex, Query
from ..sampler import FeatureConfig
from .metrics import MetricResult, stratify_cold_warm

SPEND_WINDOW = 30 * 24 * 3600


class LRFeatures:
    """Feature extractor bound to one network, catalog and purchase log."""

    def __init__(
        self,
        network: DynamicNetwork,
        catalog: ItemCatalog,
        purchases: PurchaseIndex,
        cfg: FeatureConfig,
        spend_window: int = SPEND_WINDOW,
    ):
        self.network = network
        self.catalog = catalog
        self.purchases = purchases
        self.cfg = cfg
        self.spend_window = spend_window
        B = cfg.n_bins
        item_bin = np.array([cfg.price_bin(catalog.price_index(p)) for p in network.items], dtype=np.int64)
        # per step: user -> (in-neighbors, out-neighbors, sent per bin, received per bin)
        self._steps = []
        for step_edges in network.edges:
            ins, outs = defaultdict(set), defaultdict(set)
            sent = defaultdict(lambda: np.zeros(B))
            recv = defaultdict(lambda: np.zeros(B))
            for (u, v), evs in step_edges.items():
                outs[u].add(v)
                ins[v].add(u)
                bins = item_bin[[p for p, _ in evs]]
                np.add.at(sent[u], bins, 1.0)
                np.add.at(recv[v], bins, 1.0)
            self._steps.append((ins, outs, sent, recv))

    @property
    def dim(self) -> int:
        return 3 * self.cfg.n_bins + 3

    def query_features(self, q: Query) -> np.ndarray:
        B = self.cfg.n_bins
        v = self.network.user_index[q.user]
        x = np.zeros(self.dim)
        x[self.cfg.price_bin(self.catalog.price_index(q.item))] = 1.0
        hi = self.network.grid.bounds(q.step)[0]
        spend = sum(self.catalog.price_index(it) for _, it in self.purchases.user_history(q.user, hi - self.spend_window, hi))
        x[B] = np.log1p(spend)
        ins, outs = set(), set()
        sent, recv = np.zeros(B), np.zeros(B)
        for t in range(q.step):
            i_t, o_t, s_t, r_t = self._steps[t]
            ins |= i_t.get(v, set())
            outs |= o_t.get(v, set())
            if v in s_t:
                sent += s_t[v]
            if v in r_t:
                recv += r_t[v]
        x[B + 1] = np.log1p(len(ins))
        x[B + 2] = np.log1p(len(outs))
        x[B + 3 : 2 * B + 3] = np.log1p(sent)
        x[2 * B + 3 :] = np.log1p(recv)
        return x

    def matrix(self, queries: Sequence[Query]) -> np.ndarray:
        return np.stack([self.query_features(q) for q in queries]) if queries else np.zeros((0, self.dim))


@dataclass
class LogisticRegression:
    """Full-batch gradient descent on standardized features with a small L2 penalty."""

    lr: float = 0.5
    n_iter: int = 2000
    l2: float = 1e-4
    weights: np.ndarray | None = None
    bias: float = 0.0
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> LogisticRegression:
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale = np.where(sd > 0, sd, 1.0)
        Z = (X - self.mean) / self.scale
        w = np.zeros(X.shape[1])
        b = 0.0
        n = len(y)
        for _ in range(self.n_iter):
            p = 1.0 / (1.0 + np.exp(-(Z @ w + b)))
            err = p - y
            w -= self.lr * (Z.T @ err / n + self.l2 * w)
            b -= self.lr * err.mean()
        self.weights, self.bias = w, b
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        z = (X - self.mean) / self.scale @ self.weights + self.bias
        return 1.0 / (1.0 + np.exp(-z))


def lr_baseline(
    queries: Sequence[Query],
    split,
    features: LRFeatures,
    model: LogisticRegression | None = None,
) -> tuple[LogisticRegression, MetricResult, np.ndarray]:
    """Fit on the training queries, score the test queries."""
    X = features.matrix(queries)
    y = np.array([q.label for q in queries], dtype=float)
    model = model or LogisticRegression()
    train, test = list(split.train), list(split.test)
    model.fit(X[train], y[train])
    scores = model.predict(X[test])
    cold = [queries[i].cold for i in test]
    return model, stratify_cold_warm(scores, y[test], cold), scores
