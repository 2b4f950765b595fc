"""Event logs, time discretization and the dynamic interest-diffusion network.

Event files are UTF-8 text with one space-separated record per line; lines
starting with ``#`` and blank lines are skipped.

=========  ====================================
kind       fields
=========  ====================================
diffusion  ``sender receiver item timestamp``
purchase   ``user item timestamp``
browse     ``user item timestamp``
catalog    ``item price_index category``
=========  ====================================
"""

from __future__ import annotations

import bisect
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

NETWORK_MAGIC = "INFNET-NETWORK"
NETWORK_VERSION = 1


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class SnapshotVersionError(ValueError):
    pass


class DiffusionRecord(NamedTuple):
    sender: str
    receiver: str
    item: str
    timestamp: int


class PurchaseRecord(NamedTuple):
    user: str
    item: str
    timestamp: int


class BrowseRecord(NamedTuple):
    user: str
    item: str
    timestamp: int


class CatalogEntry(NamedTuple):
    item: str
    price_index: int
    category: str


_FIELDS = {"diffusion": 4, "purchase": 3, "browse": 3, "catalog": 3}


def _parse_line(kind: str, parts: list[str], lineno: int):
    if len(parts) != _FIELDS[kind]:
        raise ParseError(f"line {lineno}: expected {_FIELDS[kind]} fields for {kind}, got {len(parts)}")
    try:
        if kind == "catalog":
            pi = int(parts[1])
            if pi < 0:
                raise ValidationError(f"line {lineno}: negative price index {pi}")
            return CatalogEntry(parts[0], pi, parts[2])
        ts = int(parts[-1])
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ParseError(f"line {lineno}: bad integer field in {' '.join(parts)!r}") from None
    if ts < 0:
        raise ValidationError(f"line {lineno}: negative timestamp {ts}")
    if kind == "diffusion":
        if parts[0] == parts[1]:
            raise ValidationError(f"line {lineno}: sender equals receiver ({parts[0]})")
        return DiffusionRecord(parts[0], parts[1], parts[2], ts)
    cls = PurchaseRecord if kind == "purchase" else BrowseRecord
    return cls(parts[0], parts[1], ts)


def load_records(path, kind: str) -> list:
    """Parse and validate one event file, preserving file order."""
    if kind not in _FIELDS:
        raise ValueError(f"unknown record kind {kind!r}")
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            out.append(_parse_line(kind, s.split(), lineno))
    if kind == "catalog":
        seen = set()
        for e in out:
            if e.item in seen:
                raise ValidationError(f"catalog lists item {e.item} more than once")
            seen.add(e.item)
    return out


def write_records(path, records: Iterable, kind: str) -> None:
    header = {
        "diffusion": "# sender receiver item timestamp",
        "purchase": "# user item timestamp",
        "browse": "# user item timestamp",
        "catalog": "# item price_index category",
    }[kind]
    lines = [header] + [" ".join(str(f) for f in r) for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class ItemCatalog:
    def __init__(self, entries: Iterable[CatalogEntry]):
        self.entries: dict[str, CatalogEntry] = {}
        for e in entries:
            if e.item in self.entries:
                raise ValidationError(f"catalog lists item {e.item} more than once")
            self.entries[e.item] = e

    def __contains__(self, item: str) -> bool:
        return item in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def price_index(self, item: str) -> int:
        try:
            return self.entries[item].price_index
        except KeyError:
            raise ValidationError(f"item {item} missing from catalog") from None

    def category(self, item: str) -> str:
        try:
            return self.entries[item].category
        except KeyError:
            raise ValidationError(f"item {item} missing from catalog") from None

    def pi_range(self) -> tuple[int, int]:
        pis = [e.price_index for e in self.entries.values()]
        return (min(pis), max(pis)) if pis else (0, 0)

    def check_covers(self, records: Iterable) -> None:
        for r in records:
            if r.item not in self.entries:
                raise ValidationError(f"item {r.item} referenced by a record is missing from the catalog")


@dataclass(frozen=True)
class TimeGrid:
    """``n`` contiguous half-open steps ``[start + i*L, start + (i+1)*L)``."""

    start: int
    step_length: int
    n: int

    @property
    def end(self) -> int:
        return self.start + self.step_length * self.n

    @property
    def steps(self) -> list[tuple[int, int]]:
        L = self.step_length
        return [(self.start + i * L, self.start + (i + 1) * L) for i in range(self.n)]

    def bounds(self, step: int) -> tuple[int, int]:
        b = self.start + step * self.step_length
        return b, b + self.step_length

    def step_of(self, ts: int) -> int | None:
        if ts < self.start or ts >= self.end:
            return None
        return int((ts - self.start) // self.step_length)


def build_time_grid(start: int, step_length: int, n: int) -> TimeGrid:
    if step_length <= 0:
        raise ConfigError(f"step_length must be positive, got {step_length}")
    if n < 2:
        raise ConfigError(f"a time grid needs at least 2 steps, got {n}")
    if start < 0:
        raise ConfigError(f"grid start must be non-negative, got {start}")
    return TimeGrid(int(start), int(step_length), int(n))


@dataclass
class DynamicNetwork:
    """Per-step directed multigraph of sharing events.

    ``edges[t]`` maps ``(sender_idx, receiver_idx)`` to a sorted list of
    ``(item_idx, timestamp)`` events that fell in step ``t``.
    """

    grid: TimeGrid
    users: list[str]
    items: list[str]
    edges: list[dict[tuple[int, int], list[tuple[int, int]]]]
    dropped: int = 0
    user_index: dict[str, int] = field(init=False, repr=False)
    item_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.user_index = {u: i for i, u in enumerate(self.users)}
        self.item_index = {p: i for i, p in enumerate(self.items)}
        self._neighbors: dict[int, list[list[int]]] = {}
        self._in_by_item: list[dict[tuple[int, int], list[int]]] | None = None
        self._out_adj: dict[int, dict] = {}

    @property
    def n_steps(self) -> int:
        return self.grid.n

    def event_count(self) -> int:
        return sum(len(ev) for step in self.edges for ev in step.values())

    def undirected_neighbors(self, upto: int) -> list[list[int]]:
        """Sorted undirected neighbor lists on the union of steps ``0..upto-1``."""
        if upto not in self._neighbors:
            nbrs: list[set[int]] = [set() for _ in self.users]
            for t in range(upto):
                for u, v in self.edges[t]:
                    nbrs[u].add(v)
                    nbrs[v].add(u)
            self._neighbors[upto] = [sorted(s) for s in nbrs]
        return self._neighbors[upto]

    def senders_of(self, receiver: int, item: int, step: int) -> list[int]:
        """Sorted senders who shared ``item`` to ``receiver`` during ``step``."""
        if self._in_by_item is None:
            idx = []
            for step_edges in self.edges:
                d: dict[tuple[int, int], list[int]] = defaultdict(list)
                for (u, v), evs in step_edges.items():
                    for p in sorted({p for p, _ in evs}):
                        d[(v, p)].append(u)
                idx.append({k: sorted(vs) for k, vs in d.items()})
            self._in_by_item = idx
        return self._in_by_item[step].get((receiver, item), [])

    def out_adjacency(self, step: int) -> dict[int, list[tuple[int, list[tuple[int, int]]]]]:
        """``sender -> [(receiver, events), ...]`` for one step, receivers ascending."""
        if step not in self._out_adj:
            adj: dict[int, list] = defaultdict(list)
            for (u, v), evs in self.edges[step].items():
                adj[u].append((v, evs))
            self._out_adj[step] = dict(adj)
        return self._out_adj[step]

    def degrees(self) -> np.ndarray:
        """In-degree plus out-degree per user on the merged directed graph."""
        pairs = {e for step in self.edges for e in step}
        deg = np.zeros(len(self.users), dtype=np.int64)
        for u, v in pairs:
            deg[u] += 1
            deg[v] += 1
        return deg

    def to_json(self) -> str:
        body = {
            "grid": [self.grid.start, self.grid.step_length, self.grid.n],
            "users": self.users,
            "items": self.items,
            "dropped": self.dropped,
            "steps": [
                [[u, v, [list(e) for e in evs]] for (u, v), evs in sorted(step.items())]
                for step in self.edges
            ],
        }
        return json.dumps(body, separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> DynamicNetwork:
        body = json.loads(text)
        start, length, n = body["grid"]
        edges = [
            {(u, v): [tuple(e) for e in evs] for u, v, evs in step} for step in body["steps"]
        ]
        return cls(TimeGrid(start, length, n), body["users"], body["items"], edges, body["dropped"])


def build_dynamic_network(records: Iterable[DiffusionRecord], grid: TimeGrid) -> DynamicNetwork:
    """Bucket sharing records into grid steps; records outside the grid are dropped."""
    kept: list[tuple[int, DiffusionRecord]] = []
    dropped = 0
    for r in records:
        if r.sender == r.receiver:
            raise ValidationError(f"self-share by {r.sender}")
        t = grid.step_of(r.timestamp)
        if t is None:
            dropped += 1
        else:
            kept.append((t, r))
    users = sorted({r.sender for _, r in kept} | {r.receiver for _, r in kept})
    items = sorted({r.item for _, r in kept})
    uidx = {u: i for i, u in enumerate(users)}
    pidx = {p: i for i, p in enumerate(items)}
    edges: list[dict] = [defaultdict(list) for _ in range(grid.n)]
    for t, r in kept:
        edges[t][(uidx[r.sender], uidx[r.receiver])].append((pidx[r.item], r.timestamp))
    edges = [{k: sorted(v) for k, v in sorted(step.items())} for step in edges]
    return DynamicNetwork(grid, users, items, edges, dropped)


def save_network(path, network: DynamicNetwork) -> None:
    Path(path).write_text(
        f"{NETWORK_MAGIC} {NETWORK_VERSION}\n{network.to_json()}\n", encoding="utf-8"
    )


def load_network(path) -> DynamicNetwork:
    text = Path(path).read_text(encoding="utf-8")
    header, _, body = text.partition("\n")
    parts = header.split()
    if len(parts) != 2 or parts[0] != NETWORK_MAGIC:
        raise SnapshotVersionError(f"{path}: not a network snapshot")
    if int(parts[1]) != NETWORK_VERSION:
        raise SnapshotVersionError(
            f"{path}: snapshot version {parts[1]}, this build reads version {NETWORK_VERSION}"
        )
    return DynamicNetwork.from_json(body)


@dataclass(frozen=True)
class Query:
    user: str
    item: str
    step: int
    label: int
    cold: bool


class PurchaseIndex:
    """Sorted purchase timestamps per (user, item) and per user."""

    def __init__(self, purchases: Iterable[PurchaseRecord]):
        by_pair: dict[tuple[str, str], list[int]] = defaultdict(list)
        by_user: dict[str, list[tuple[int, str]]] = defaultdict(list)
        for p in purchases:
            by_pair[(p.user, p.item)].append(p.timestamp)
            by_user[p.user].append((p.timestamp, p.item))
        self.by_pair = {k: sorted(v) for k, v in by_pair.items()}
        self.by_user = {k: sorted(v) for k, v in by_user.items()}

    def bought_in(self, user: str, item: str, lo: int, hi: int) -> bool:
        """Any purchase of ``item`` by ``user`` with ``lo <= ts < hi``."""
        ts = self.by_pair.get((user, item))
        if not ts:
            return False
        i = bisect.bisect_left(ts, lo)
        return i < len(ts) and ts[i] < hi

    def first_after(self, user: str, item: str, ts: int) -> int | None:
        """Earliest purchase strictly after ``ts``."""
        lst = self.by_pair.get((user, item))
        if not lst:
            return None
        i = bisect.bisect_right(lst, ts)
        return lst[i] if i < len(lst) else None

    def bought_before(self, user: str, item: str, ts: int) -> bool:
        lst = self.by_pair.get((user, item))
        return bool(lst) and lst[0] < ts

    def user_history(self, user: str, lo: int, hi: int) -> list[tuple[int, str]]:
        lst = self.by_user.get(user)
        if not lst:
            return []
        i = bisect.bisect_left(lst, (lo, ""))
        j = bisect.bisect_left(lst, (hi, ""))
        return lst[i:j]

    def has_any_before(self, user: str, ts: int) -> bool:
        lst = self.by_user.get(user)
        return bool(lst) and lst[0][0] < ts


def materialize_queries(
    network: DynamicNetwork, purchases: Iterable[PurchaseRecord] | PurchaseIndex, step: int
) -> list[Query]:
    """One labeled query per distinct (receiver, item) shared during ``step - 1``."""
    if not 1 <= step <= network.n_steps - 1:
        raise ConfigError(f"query step must be in [1, {network.n_steps - 1}], got {step}")
    index = purchases if isinstance(purchases, PurchaseIndex) else PurchaseIndex(purchases)
    lo, hi = network.grid.bounds(step)
    pairs = {(v, p) for (u, v), evs in network.edges[step - 1].items() for p, _ in evs}
    out = []
    for v, p in sorted(pairs):
        user, item = network.users[v], network.items[p]
        out.append(
            Query(
                user=user,
                item=item,
                step=step,
                label=int(index.bought_in(user, item, lo, hi)),
                cold=not index.has_any_before(user, network.grid.start),
            )
        )
    return out


def save_queries(path, queries: Iterable[Query]) -> None:
    lines = ["# user item step label cold"]
    lines += [f"{q.user} {q.item} {q.step} {q.label} {int(q.cold)}" for q in queries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_queries(path) -> list[Query]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 5:
                raise ParseError(f"line {lineno}: expected 5 query fields, got {len(parts)}")
            out.append(Query(parts[0], parts[1], int(parts[2]), int(parts[3]), parts[4] == "1"))
    return out
