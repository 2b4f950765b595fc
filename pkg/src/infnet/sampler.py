"""Per-query diffusion sub-graphs with node and edge features.

For a query ``(u, p, i)`` the seed set is ``u`` plus every user who shared
``p`` to ``u`` during step ``i - 1``. Nodes are collected by breadth-first
search over the undirected union of the steps ``0 .. i-1``; per-step edges are
then restricted to that node set.
"""

from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .events import DynamicNetwork, ItemCatalog, PurchaseIndex, PurchaseRecord, Query, ValidationError

ROLE_TARGET, ROLE_SEED, ROLE_OTHER = 0, 1, 2
ROLE_WIDTH = 3


@dataclass(frozen=True)
class FeatureConfig:
    """Price binning and purchase-history window.

    ``thresholds`` are the B-1 inner bin edges over price index: a PI goes to
    bin ``k`` where ``k`` is the number of thresholds ``<=`` PI.
    ``lookback`` is in seconds; ``None`` uses the whole history.
    """

    n_bins: int
    thresholds: tuple[float, ...]
    lookback: int | None = None

    def __post_init__(self):
        if self.n_bins < 1:
            raise ValueError(f"need at least one price bin, got {self.n_bins}")
        if len(self.thresholds) != self.n_bins - 1:
            raise ValueError(f"{self.n_bins} bins need {self.n_bins - 1} thresholds")
        if list(self.thresholds) != sorted(self.thresholds):
            raise ValueError("bin thresholds must be non-decreasing")

    @classmethod
    def equal_width(cls, pi_min: int, pi_max: int, n_bins: int, lookback: int | None = None) -> FeatureConfig:
        width = (pi_max - pi_min + 1) / n_bins
        return cls(n_bins, tuple(pi_min + width * k for k in range(1, n_bins)), lookback)

    @classmethod
    def from_catalog(cls, catalog: ItemCatalog, n_bins: int, lookback: int | None = None) -> FeatureConfig:
        lo, hi = catalog.pi_range()
        return cls.equal_width(lo, hi, n_bins, lookback)

    def price_bin(self, pi: float) -> int:
        return bisect.bisect_right(self.thresholds, pi)

    @property
    def node_dim(self) -> int:
        return self.n_bins + ROLE_WIDTH


@dataclass
class QuerySubgraph:
    """Local view of one query.

    Node 0 is always the target user. ``edges[t]`` is ``(src, dst, feat)`` for
    step ``t`` in ``0 .. n_steps-1`` with local indices.
    """

    query: Query
    users: list[str]
    seeds: list[int]
    senders: list[int]
    node_feat: np.ndarray
    item_feat: np.ndarray
    edges: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
    roles: np.ndarray = field(default=None)

    @property
    def n_nodes(self) -> int:
        return len(self.users)

    @property
    def n_steps(self) -> int:
        return len(self.edges)

    def in_neighbors(self, node: int, step: int) -> list[int]:
        src, dst, _ = self.edges[step]
        return src[dst == node].tolist()

    def out_neighbors(self, node: int, step: int) -> list[int]:
        src, dst, _ = self.edges[step]
        return dst[src == node].tolist()

    def undirected_pairs(self) -> np.ndarray:
        """Unique unordered neighbor pairs ``(a, b)``, ``a < b``, over all steps."""
        pairs = set()
        for src, dst, _ in self.edges:
            for a, b in zip(src.tolist(), dst.tolist()):
                pairs.add((min(a, b), max(a, b)))
        if not pairs:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(sorted(pairs), dtype=np.int64)


def seed_set(query: Query, network: DynamicNetwork) -> set[str]:
    """``{u}`` plus the users who shared the queried item to ``u`` in the previous step."""
    v = network.user_index[query.user]
    p = network.item_index[query.item]
    return {query.user} | {network.users[s] for s in network.senders_of(v, p, query.step - 1)}


def bfs_nodes(neighbors: list[list[int]], seeds: list[int], depth: int) -> list[int]:
    """Nodes within ``depth`` hops of ``seeds`` in discovery order.

    Seeds come first in the order given; each frontier is expanded with
    neighbors in ascending index order.
    """
    order = list(dict.fromkeys(seeds))
    seen = set(order)
    queue = deque((s, 0) for s in order)
    while queue:
        node, d = queue.popleft()
        if d == depth:
            continue
        for w in neighbors[node]:
            if w not in seen:
                seen.add(w)
                order.append(w)
                queue.append((w, d + 1))
    return order


def node_features(
    user: str,
    query: Query,
    purchases: Iterable[PurchaseRecord] | PurchaseIndex,
    cfg: FeatureConfig,
    catalog: ItemCatalog,
    network: DynamicNetwork,
    role: int,
) -> np.ndarray:
    """Purchase-count histogram over price bins, then the 3-wide role one-hot."""
    index = purchases if isinstance(purchases, PurchaseIndex) else PurchaseIndex(purchases)
    hi = network.grid.bounds(query.step)[0]
    lo = -(2**62) if cfg.lookback is None else hi - cfg.lookback
    vec = np.zeros(cfg.node_dim)
    for _, item in index.user_history(user, lo, hi):
        vec[cfg.price_bin(catalog.price_index(item))] += 1
    vec[cfg.n_bins + role] = 1.0
    return vec


def edge_features(
    u: str, v: str, step: int, network: DynamicNetwork, catalog: ItemCatalog, cfg: FeatureConfig
) -> np.ndarray | None:
    """Summed price-bin one-hots of the items ``u`` sent to ``v`` in ``step``.

    Returns ``None`` when no such edge exists in that step.
    """
    evs = network.edges[step].get((network.user_index[u], network.user_index[v]))
    if not evs:
        return None
    vec = np.zeros(cfg.n_bins)
    for p, _ in evs:
        vec[cfg.price_bin(catalog.price_index(network.items[p]))] += 1
    return vec


class SubgraphSampler:
    """Builds :class:`QuerySubgraph` objects over one immutable network.

    Item bins and per-user histories are precomputed once; the sampler holds
    no per-query state.
    """

    def __init__(
        self,
        network: DynamicNetwork,
        catalog: ItemCatalog,
        purchases: Iterable[PurchaseRecord] | PurchaseIndex,
        cfg: FeatureConfig,
        depth: int = 2,
    ):
        self.network = network
        self.catalog = catalog
        self.cfg = cfg
        self.depth = depth
        self.purchases = purchases if isinstance(purchases, PurchaseIndex) else PurchaseIndex(purchases)
        for hist in self.purchases.by_user.values():
            for _, item in hist:
                if item not in catalog:
                    raise ValidationError(f"purchased item {item} missing from catalog")
        self.item_bin = np.array(
            [cfg.price_bin(catalog.price_index(p)) for p in network.items], dtype=np.int64
        )
        self._hist_cache: dict[tuple[str, int], np.ndarray] = {}

    def _history(self, user: str, step: int) -> np.ndarray:
        key = (user, step)
        vec = self._hist_cache.get(key)
        if vec is None:
            hi = self.network.grid.bounds(step)[0]
            lo = -(2**62) if self.cfg.lookback is None else hi - self.cfg.lookback
            vec = np.zeros(self.cfg.n_bins)
            for _, item in self.purchases.user_history(user, lo, hi):
                vec[self.cfg.price_bin(self.catalog.price_index(item))] += 1
            self._hist_cache[key] = vec
        return vec

    def item_features(self, item: str) -> np.ndarray:
        vec = np.zeros(self.cfg.n_bins)
        vec[self.cfg.price_bin(self.catalog.price_index(item))] = 1.0
        return vec

    def sample(self, query: Query, depth: int | None = None) -> QuerySubgraph:
        net = self.network
        depth = self.depth if depth is None else depth
        target = net.user_index[query.user]
        item = net.item_index[query.item]
        senders = net.senders_of(target, item, query.step - 1)
        nbrs = net.undirected_neighbors(query.step)
        order = bfs_nodes(nbrs, [target] + senders, depth)
        local = {g: i for i, g in enumerate(order)}
        sender_local = [local[s] for s in senders]

        roles = np.full(len(order), ROLE_OTHER, dtype=np.int64)
        roles[sender_local] = ROLE_SEED
        roles[0] = ROLE_TARGET
        B = self.cfg.n_bins
        node_feat = np.zeros((len(order), B + ROLE_WIDTH))
        for i, g in enumerate(order):
            node_feat[i, :B] = self._history(net.users[g], query.step)
        node_feat[np.arange(len(order)), B + roles] = 1.0

        edges = []
        for t in range(query.step):
            src, dst, feats = [], [], []
            adj = net.out_adjacency(t)
            for a in order:
                for b, evs in adj.get(a, ()):
                    lb = local.get(b)
                    if lb is None:
                        continue
                    vec = np.zeros(B)
                    np.add.at(vec, self.item_bin[[p for p, _ in evs]], 1.0)
                    src.append(local[a])
                    dst.append(lb)
                    feats.append(vec)
            order_idx = np.lexsort((dst, src)) if src else np.zeros(0, dtype=np.int64)
            edges.append(
                (
                    np.asarray(src, dtype=np.int64)[order_idx],
                    np.asarray(dst, dtype=np.int64)[order_idx],
                    np.asarray(feats, dtype=float).reshape(-1, B)[order_idx],
                )
            )
        return QuerySubgraph(
            query=query,
            users=[net.users[g] for g in order],
            seeds=[0] + sender_local,
            senders=sender_local,
            node_feat=node_feat,
            item_feat=self.item_features(query.item),
            edges=edges,
            roles=roles,
        )


def sample_subgraph(
    query: Query,
    network: DynamicNetwork,
    catalog: ItemCatalog,
    purchases: Iterable[PurchaseRecord] | PurchaseIndex,
    cfg: FeatureConfig,
    depth: int = 2,
) -> QuerySubgraph:
    return SubgraphSampler(network, catalog, purchases, cfg, depth).sample(query)


def dump_subgraph(sg: QuerySubgraph) -> str:
    """Plain-text dump: header, nodes with role and features, then per-step edges."""
    q = sg.query
    lines = [f"query {q.user} {q.item} step={q.step} label={q.label} cold={int(q.cold)}"]
    lines.append("seeds " + " ".join(sg.users[i] for i in sg.seeds))
    role_names = ("target", "seed", "other")
    for i, u in enumerate(sg.users):
        feats = " ".join(f"{x:g}" for x in sg.node_feat[i])
        lines.append(f"node {i} {u} {role_names[sg.roles[i]]} [{feats}]")
    for t, (src, dst, feat) in enumerate(sg.edges):
        lines.append(f"step {t} edges={len(src)}")
        for a, b, f in zip(src, dst, feat):
            lines.append(f"  {sg.users[a]} -> {sg.users[b]} [{' '.join(f'{x:g}' for x in f)}]")
    return "\n".join(lines) + "\n"
