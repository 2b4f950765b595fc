"""Seeded synthetic sharing / browsing / purchase logs with planted effects.

Generation runs in three passes over one random stream:

1. browsing: every user browses popular items each week; a browse converts with
   ``logistic(b0 + b_price * PI + b_affinity * a_u)``;
2. sharing: a community-structured contact graph with truncated power-law
   degrees carries share cascades (originators sometimes share items they
   bought; every receiver forwards with the cascade probability);
3. share purchases: share records are walked in time order and converted with
   ``logistic(b0 + b_taocode + b_neighbors * close + b_sender_bought * [bought]
   + (b_price + b_price_share) * PI + b_gap * |deg_s - deg_r| + b_affinity * a_u)``.

``close`` counts the receiver's neighbors on the merged sharing graph who
received and bought the item before the record, capped at 4; ``deg`` is
in+out degree on that merged graph and the gap is capped at 8. ``a_u`` is a
per-user latent purchase affinity, partly shared within a community
(homophily), that also raises how often the user starts shares. Every event draws its own purchase, so
repeat purchases of one item occur; a purchase lands uniformly inside the grid
step after the event that caused it.

Sharing starts ``share_history_steps`` weeks before the grid so that long
forwarding gaps are observable; those early records fall outside the grid and
are dropped by the network builder.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import asdict, dataclass, fields

import numpy as np

from .events import (
    BrowseRecord,
    CatalogEntry,
    DiffusionRecord,
    PurchaseRecord,
    TimeGrid,
    build_time_grid,
)

WEEK = 7 * 24 * 3600
DAY = 24 * 3600


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 50_000
    n_items: int = 1_000
    n_categories: int = 24
    pi_max: int = 9
    n_steps: int = 4
    step_length: int = WEEK
    history_steps: int = 8
    share_history_steps: int = 3
    community_size: int = 20
    community_frac: float = 0.9
    degree_exponent: float = 1.6
    max_degree: int = 80
    base_share_rate: float = 0.0115
    fanout: float = 2.0
    cascade_prob: float = 0.6
    forward_delay: float = 4 * DAY
    slow_forward_frac: float = 0.25
    slow_forward_max: float = 6 * WEEK
    share_own_prob: float = 0.3
    browse_rate: float = 1.0
    item_zipf: float = 1.2
    beta0: float = -2.6
    beta_taocode: float = 0.9
    beta_neighbors: float = 0.5
    beta_sender_bought: float = 1.2
    beta_price: float = -0.35
    beta_price_share: float = 0.2
    beta_gap: float = 0.12
    beta_affinity: float = 0.9
    homophily: float = 0.6
    share_affinity: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_users < 2 or self.n_items < 1 or self.n_categories < 1:
            raise ValueError("need at least 2 users, 1 item and 1 category")
        for name in ("cascade_prob", "community_frac", "slow_forward_frac", "share_own_prob", "homophily"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.n_steps < 2:
            raise ValueError("the grid needs at least 2 steps")
        if self.share_history_steps > self.history_steps:
            raise ValueError("share_history_steps cannot exceed history_steps")
        if min(self.base_share_rate, self.browse_rate, self.fanout, self.forward_delay) < 0:
            raise ValueError("rates and delays must be non-negative")
        if self.step_length <= 0 or self.community_size < 2 or self.max_degree < 1:
            raise ValueError("step_length, community_size and max_degree must be positive")

    @property
    def grid(self) -> TimeGrid:
        return build_time_grid(self.history_steps * self.step_length, self.step_length, self.n_steps)

    def replace(self, **kw) -> SynthConfig:
        unknown = set(kw) - {f.name for f in fields(self)}
        if unknown:
            raise KeyError(f"unknown SynthConfig fields {sorted(unknown)}")
        return SynthConfig(**{**asdict(self), **kw})


@dataclass
class SynthLogs:
    catalog: list[CatalogEntry]
    diffusion: list[DiffusionRecord]
    browse: list[BrowseRecord]
    purchase: list[PurchaseRecord]
    grid: TimeGrid


def _logistic(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


def _pair_stubs(rng, stubs, out):
    rng.shuffle(stubs)
    if len(stubs) % 2:
        stubs = stubs[:-1]
    a, b = stubs[0::2], stubs[1::2]
    keep = a != b
    out.append(np.sort(np.stack([a[keep], b[keep]], axis=1), axis=1))


def contact_graph(rng: np.random.Generator, cfg: SynthConfig) -> list[np.ndarray]:
    """Undirected contact lists with truncated power-law degrees.

    Each user's stubs go to a local pool (its community) with probability
    ``community_frac`` and to the global pool otherwise; pools are paired at
    random and self-loops and duplicate pairs are dropped.
    """
    ks = np.arange(1, cfg.max_degree + 1)
    pk = ks.astype(float) ** -cfg.degree_exponent
    deg = rng.choice(ks, size=cfg.n_users, p=pk / pk.sum())
    local = rng.binomial(deg, cfg.community_frac)
    community = np.arange(cfg.n_users) // cfg.community_size
    pairs: list[np.ndarray] = []
    _pair_stubs(rng, np.repeat(np.arange(cfg.n_users), deg - local), pairs)
    local_stubs = np.repeat(np.arange(cfg.n_users), local)
    bounds = np.searchsorted(community[local_stubs], np.arange(community[-1] + 2))
    for c in range(community[-1] + 1):
        _pair_stubs(rng, local_stubs[bounds[c] : bounds[c + 1]].copy(), pairs)
    allp = np.unique(np.concatenate(pairs), axis=0) if pairs else np.zeros((0, 2), dtype=np.int64)
    nbrs: list[list[int]] = [[] for _ in range(cfg.n_users)]
    for u, v in allp.tolist():
        nbrs[u].append(v)
        nbrs[v].append(u)
    return [np.array(sorted(n), dtype=np.int64) for n in nbrs]


def _catalog(rng, cfg):
    centers = rng.uniform(0, cfg.pi_max, size=cfg.n_categories)
    cats = rng.integers(0, cfg.n_categories, size=cfg.n_items)
    pis = np.clip(np.rint(centers[cats] + rng.normal(0, 1.2, size=cfg.n_items)), 0, cfg.pi_max).astype(int)
    pop = 1.0 / np.arange(1, cfg.n_items + 1) ** cfg.item_zipf
    pop = pop[rng.permutation(cfg.n_items)]
    return pis, cats, pop / pop.sum()


def _browsing(rng, cfg, pis, item_p, affinity):
    """Browse events ``(t, user, item)`` and the purchases ``(t, user, item)`` they trigger."""
    L = cfg.step_length
    browses = []
    for step in range(cfg.history_steps + cfg.n_steps):
        counts = rng.poisson(cfg.browse_rate, size=cfg.n_users)
        users = np.repeat(np.arange(cfg.n_users), counts)
        items = rng.choice(cfg.n_items, size=len(users), p=item_p)
        times = rng.integers(step * L, (step + 1) * L, size=len(users))
        browses += zip(times.tolist(), users.tolist(), items.tolist())
    browses.sort()
    bought = []
    for t, u, p in browses:
        if rng.random() < _logistic(cfg.beta0 + cfg.beta_price * pis[p] + cfg.beta_affinity * affinity[u]):
            bought.append(((t // L + 1) * L + int(rng.integers(0, L)), u, p))
    return browses, bought


def _forward_delay(rng, cfg) -> float:
    if rng.random() < cfg.slow_forward_frac:
        return rng.uniform(0, cfg.slow_forward_max)
    return rng.exponential(cfg.forward_delay)


def user_affinity(rng, cfg) -> np.ndarray:
    """Unit-variance latent affinity; a ``homophily`` share of the variance is common to a community."""
    n_comm = (cfg.n_users - 1) // cfg.community_size + 1
    shared = rng.normal(size=n_comm)[np.arange(cfg.n_users) // cfg.community_size]
    own = rng.normal(size=cfg.n_users)
    return np.sqrt(cfg.homophily) * shared + np.sqrt(1.0 - cfg.homophily) * own


def _cascades(rng, cfg, nbrs, item_p, owned, affinity):
    """Share events ``(t, sender, receiver, item)`` from the first sharing week to the grid end.

    Origination rate grows with contact degree and with ``exp(share_affinity * a_u)``.
    """
    end = cfg.grid.end
    L = cfg.step_length
    weight = np.array([len(n) for n in nbrs], dtype=float) * np.exp(cfg.share_affinity * affinity)
    rate = cfg.base_share_rate * weight / max(weight.mean(), 1e-9)
    events = []
    forwarded: set[tuple[int, int]] = set()
    queue: deque = deque()

    def send(u, item, t, exclude):
        cand = nbrs[u] if exclude < 0 else nbrs[u][nbrs[u] != exclude]
        if len(cand) == 0:
            return
        m = min(len(cand), 1 + int(rng.poisson(max(cfg.fanout - 1.0, 0.0))))
        for v in rng.choice(cand, size=m, replace=False).tolist():
            ts = int(t + rng.uniform(0, 3600))
            if ts < end:
                events.append((ts, u, v, item))
                queue.append((ts, u, v, item))

    first = cfg.history_steps - cfg.share_history_steps
    for step in range(first, cfg.history_steps + cfg.n_steps):
        counts = rng.poisson(rate)
        for u in np.flatnonzero(counts).tolist():
            for _ in range(counts[u]):
                t = rng.uniform(step * L, (step + 1) * L)
                mine = [p for p, bt in owned.get(u, ()) if bt < t]
                if mine and rng.random() < cfg.share_own_prob:
                    item = mine[int(rng.integers(len(mine)))]
                else:
                    item = int(rng.choice(len(item_p), p=item_p))
                send(u, item, t, -1)
                while queue:
                    ts, s, v, it = queue.popleft()
                    if (v, it) in forwarded or rng.random() >= cfg.cascade_prob:
                        continue
                    forwarded.add((v, it))
                    send(v, it, ts + _forward_delay(rng, cfg), s)
    events.sort()
    return events


def merged_graph(shares) -> tuple[dict[int, set[int]], dict[int, int]]:
    """Undirected neighbor sets and in+out degree of the merged directed share graph."""
    union: dict[int, set[int]] = defaultdict(set)
    directed = set()
    for _, s, r, _ in shares:
        union[s].add(r)
        union[r].add(s)
        directed.add((s, r))
    deg: dict[int, int] = defaultdict(int)
    for s, r in directed:
        deg[s] += 1
        deg[r] += 1
    return union, deg


def generate(cfg: SynthConfig) -> SynthLogs:
    """Draw catalog, diffusion, browse and purchase logs; deterministic in ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    L = cfg.step_length
    nbrs = contact_graph(rng, cfg)
    pis, cats, item_p = _catalog(rng, cfg)
    affinity = user_affinity(rng, cfg)

    browses, browse_bought = _browsing(rng, cfg, pis, item_p, affinity)
    owned: dict[int, list[tuple[int, int]]] = defaultdict(list)
    bought: dict[tuple[int, int], int] = {}
    for bt, u, p in sorted(browse_bought):
        owned[u].append((p, bt))
        bought.setdefault((u, p), bt)
    shares = _cascades(rng, cfg, nbrs, item_p, owned, affinity)
    union, deg = merged_graph(shares)

    # every share record draws independently; ``bought`` keeps the earliest purchase
    received: dict[tuple[int, int], int] = {}
    extra = []
    for t, s, r, p in shares:
        key = (r, p)
        received.setdefault(key, t)
        close = sum(1 for w in union[r] if received.get((w, p), t) < t and bought.get((w, p), t) < t)
        z = (
            cfg.beta0
            + cfg.beta_taocode
            + cfg.beta_neighbors * min(close, 4)
            + cfg.beta_sender_bought * (bought.get((s, p), t) < t)
            + (cfg.beta_price + cfg.beta_price_share) * pis[p]
            + cfg.beta_gap * min(abs(deg[s] - deg[r]), 8)
            + cfg.beta_affinity * affinity[r]
        )
        if rng.random() < _logistic(z):
            bt = (t // L + 1) * L + int(rng.integers(0, L))
            bought[key] = min(bought.get(key, bt), bt)
            extra.append((bt, r, p))

    purchases = sorted(browse_bought + extra)
    uid = lambda i: f"u{i:06d}"  # noqa: E731
    pid = lambda i: f"p{i:05d}"  # noqa: E731
    catalog = [CatalogEntry(pid(i), int(pis[i]), f"c{cats[i]:03d}") for i in range(cfg.n_items)]
    return SynthLogs(
        catalog=catalog,
        diffusion=[DiffusionRecord(uid(s), uid(r), pid(p), t) for t, s, r, p in shares],
        browse=[BrowseRecord(uid(u), pid(p), t) for t, u, p in browses],
        purchase=[PurchaseRecord(uid(u), pid(p), t) for t, u, p in purchases],
        grid=cfg.grid,
    )
