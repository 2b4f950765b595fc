"""Observational statistics over sharing, browsing and purchase logs.

A record converts when the same (user, item) pair has a purchase strictly
after the record and no later than ``horizon`` seconds after it. The
conversion index of a group is ``100 * converted / total``. Sharing records
are attributed to their receiver.

Graph quantities (degrees, neighbor sets) come from the merged sharing graph:
all diffusion records collapsed into one directed graph, degree = in + out.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .events import BrowseRecord, DiffusionRecord, ItemCatalog, PurchaseIndex, PurchaseRecord

WEEK = 7 * 24 * 3600
DEFAULT_HORIZON = WEEK
MAX_DEGREE = 9
NEIGHBOR_BUCKETS = ("0", "1", "2", "3", "4+")
GAP_BUCKETS = ("0", "1", "2", "3", "4+")


class AnalyticsError(ValueError):
    pass


class EmptyGroupWarning(UserWarning):
    pass


def ci_value(converted: int, total: int) -> float:
    """Conversion index in percent; ``nan`` when there is no support."""
    return 100.0 * converted / total if total else math.nan


@dataclass(frozen=True)
class CICell:
    converted: int
    total: int

    @property
    def ci(self) -> float:
        return ci_value(self.converted, self.total)


def _actor(record) -> str:
    return record.receiver if isinstance(record, DiffusionRecord) else record.user


def conversion_flags(
    records: Sequence[DiffusionRecord | BrowseRecord],
    purchases: Iterable[PurchaseRecord] | PurchaseIndex,
    horizon: int = DEFAULT_HORIZON,
) -> np.ndarray:
    """Boolean array: record ``k`` is followed by a purchase within ``(t, t + horizon]``."""
    if horizon <= 0:
        raise AnalyticsError(f"horizon must be positive, got {horizon}")
    index = purchases if isinstance(purchases, PurchaseIndex) else PurchaseIndex(purchases)
    out = np.zeros(len(records), dtype=bool)
    for k, r in enumerate(records):
        nxt = index.first_after(_actor(r), r.item, r.timestamp)
        out[k] = nxt is not None and nxt - r.timestamp <= horizon
    return out


def conversion_index(
    records: Sequence[DiffusionRecord | BrowseRecord],
    purchases: Iterable[PurchaseRecord] | PurchaseIndex,
    catalog: ItemCatalog,
    group_by: str = "item",
    horizon: int = DEFAULT_HORIZON,
    flags: np.ndarray | None = None,
) -> dict[str, CICell]:
    """CI per item or per category.

    Catalog groups without any record are left out and reported through an
    :class:`EmptyGroupWarning`.
    """
    if group_by not in ("item", "category"):
        raise AnalyticsError(f"group_by must be 'item' or 'category', got {group_by!r}")
    if flags is None:
        flags = conversion_flags(records, purchases, horizon)
    key = (lambda item: item) if group_by == "item" else catalog.category
    conv: dict[str, int] = defaultdict(int)
    tot: dict[str, int] = defaultdict(int)
    for r, f in zip(records, flags):
        g = key(r.item)
        tot[g] += 1
        conv[g] += int(f)
    universe = {key(e.item) for e in catalog.entries.values()}
    empty = universe - set(tot)
    if empty:
        warnings.warn(f"{len(empty)} {group_by} groups have no records and are excluded", EmptyGroupWarning)
    return {g: CICell(conv[g], tot[g]) for g in sorted(tot)}


@dataclass(frozen=True)
class LiftPoint:
    group: str
    mean_pi: float
    ci_taocode: float
    ci_browse: float

    @property
    def lift(self) -> float:
        return self.ci_taocode / self.ci_browse


def lift_points(
    taocode: dict[str, CICell], browse: dict[str, CICell], catalog: ItemCatalog, group_by: str = "category"
) -> list[LiftPoint]:
    """Groups with both CIs defined and a nonzero browse CI."""
    members: dict[str, list[int]] = defaultdict(list)
    for e in catalog.entries.values():
        members[e.item if group_by == "item" else e.category].append(e.price_index)
    out = []
    for g in sorted(set(taocode) & set(browse)):
        if browse[g].converted == 0:
            continue
        out.append(LiftPoint(g, float(np.mean(members[g])), taocode[g].ci, browse[g].ci))
    return out


@dataclass(frozen=True)
class LiftFit:
    slope: float
    intercept: float
    spearman: float
    spearman_p: float
    points: tuple[LiftPoint, ...]


def ci_lift_vs_pi(points: Sequence[LiftPoint]) -> LiftFit:
    """OLS slope of CI Lift on mean PI plus Spearman rank correlation."""
    if len(points) < 3:
        raise AnalyticsError(f"need at least 3 groups with both CIs defined, got {len(points)}")
    x = np.array([p.mean_pi for p in points])
    y = np.array([p.lift for p in points])
    if np.ptp(x) == 0:
        raise AnalyticsError("all groups share the same mean PI; slope undefined")
    slope, intercept = np.polyfit(x, y, 1)
    if np.ptp(y) == 0:
        rho, pval = 0.0, 1.0
    else:
        res = stats.spearmanr(x, y)
        rho, pval = float(res.statistic), float(res.pvalue)
    return LiftFit(float(slope), float(intercept), rho, pval, tuple(points))


class MergedGraph:
    """All sharing records collapsed into one graph."""

    def __init__(self, records: Iterable[DiffusionRecord]):
        directed = set()
        nbrs: dict[str, set[str]] = defaultdict(set)
        for r in records:
            directed.add((r.sender, r.receiver))
            nbrs[r.sender].add(r.receiver)
            nbrs[r.receiver].add(r.sender)
        deg: dict[str, int] = defaultdict(int)
        for s, v in directed:
            deg[s] += 1
            deg[v] += 1
        self.degree = dict(deg)
        self.neighbors = {u: sorted(v) for u, v in nbrs.items()}


@dataclass(frozen=True)
class DegreeGapMatrix:
    """``cells[s-1][r-1]`` for sender degree ``s`` and receiver degree ``r`` in 1..9."""

    converted: np.ndarray
    total: np.ndarray

    @property
    def ci(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.total > 0, 100.0 * self.converted / np.maximum(self.total, 1), np.nan)


def degree_gap_matrix(
    records: Sequence[DiffusionRecord],
    purchases: Iterable[PurchaseRecord] | PurchaseIndex,
    graph: MergedGraph | None = None,
    horizon: int = DEFAULT_HORIZON,
    flags: np.ndarray | None = None,
) -> DegreeGapMatrix:
    graph = graph or MergedGraph(records)
    if flags is None:
        flags = conversion_flags(records, purchases, horizon)
    conv = np.zeros((MAX_DEGREE, MAX_DEGREE), dtype=np.int64)
    tot = np.zeros((MAX_DEGREE, MAX_DEGREE), dtype=np.int64)
    for r, f in zip(records, flags):
        ds, dr = graph.degree.get(r.sender, 0), graph.degree.get(r.receiver, 0)
        if 1 <= ds <= MAX_DEGREE and 1 <= dr <= MAX_DEGREE:
            tot[ds - 1, dr - 1] += 1
            conv[ds - 1, dr - 1] += int(f)
    return DegreeGapMatrix(conv, tot)


class _Timeline:
    """Sorted first-event times used for 'before the record' lookups."""

    def __init__(self, records: Iterable[DiffusionRecord]):
        recv: dict[tuple[str, str], list[int]] = defaultdict(list)
        for r in records:
            recv[(r.receiver, r.item)].append(r.timestamp)
        self.received = {k: sorted(v) for k, v in recv.items()}

    def received_before(self, user: str, item: str, ts: int) -> bool:
        lst = self.received.get((user, item))
        return bool(lst) and lst[0] < ts

    def last_receipt_before(self, user: str, item: str, ts: int) -> int | None:
        lst = self.received.get((user, item))
        if not lst:
            return None
        i = bisect.bisect_left(lst, ts)
        return lst[i - 1] if i > 0 else None


def close_neighbor_counts(
    records: Sequence[DiffusionRecord],
    purchases: Iterable[PurchaseRecord] | PurchaseIndex,
    graph: MergedGraph | None = None,
) -> np.ndarray:
    """Per record: receiver's neighbors that received and bought the item strictly earlier."""
    graph = graph or MergedGraph(records)
    index = purchases if isinstance(purchases, PurchaseIndex) else PurchaseIndex(purchases)
    tl = _Timeline(records)
    out = np.zeros(len(records), dtype=np.int64)
    for k, r in enumerate(records):
        out[k] = sum(
            1
            for w in graph.neighbors.get(r.receiver, ())
            if tl.received_before(w, r.item, r.timestamp) and index.bought_before(w, r.item, r.timestamp)
        )
    return out


def close_neighbor_curve(
    records: Sequence[DiffusionRecord],
    purchases: Iterable[PurchaseRecord] | PurchaseIndex,
    graph: MergedGraph | None = None,
    horizon: int = DEFAULT_HORIZON,
    flags: np.ndarray | None = None,
) -> dict[str, CICell]:
    """CI per close-neighbor bucket ``0, 1, 2, 3, 4+`` (buckets without records omitted)."""
    if flags is None:
        flags = conversion_flags(records, purchases, horizon)
    counts = close_neighbor_counts(records, purchases, graph)
    return _bucketed(np.minimum(counts, 4), flags, NEIGHBOR_BUCKETS)


def _bucketed(bucket: np.ndarray, flags: np.ndarray, names) -> dict[str, CICell]:
    out = {}
    for b, name in enumerate(names):
        sel = bucket == b
        if sel.any():
            out[name] = CICell(int(flags[sel].sum()), int(sel.sum()))
    return out


def gap_weeks(gap_seconds: int, week: int = WEEK) -> int:
    """Ceiling week count of a positive gap."""
    return -(-gap_seconds // week)


def temporal_gaps(
    records: Sequence[DiffusionRecord],
    purchases: Iterable[PurchaseRecord] | PurchaseIndex,
    week: int = WEEK,
) -> tuple[np.ndarray, np.ndarray]:
    """Per record ``u2 -> u3``: gap bucket to ``u2``'s latest earlier receipt, and whether ``u2`` bought first.

    The gap bucket is 0 when ``u2`` never received the item before.
    """
    index = purchases if isinstance(purchases, PurchaseIndex) else PurchaseIndex(purchases)
    tl = _Timeline(records)
    gaps = np.zeros(len(records), dtype=np.int64)
    bought = np.zeros(len(records), dtype=bool)
    for k, r in enumerate(records):
        prev = tl.last_receipt_before(r.sender, r.item, r.timestamp)
        gaps[k] = 0 if prev is None else min(gap_weeks(r.timestamp - prev, week), 4)
        bought[k] = index.bought_before(r.sender, r.item, r.timestamp)
    return gaps, bought


def temporal_gap_bars(
    records: Sequence[DiffusionRecord],
    purchases: Iterable[PurchaseRecord] | PurchaseIndex,
    horizon: int = DEFAULT_HORIZON,
    week: int = WEEK,
    flags: np.ndarray | None = None,
) -> dict[tuple[str, bool], CICell]:
    """CI keyed by ``(gap bucket, sender bought)``; empty combinations omitted."""
    if flags is None:
        flags = conversion_flags(records, purchases, horizon)
    gaps, bought = temporal_gaps(records, purchases, week)
    out = {}
    for flag in (False, True):
        for name, cell in _bucketed(np.where(bought == flag, gaps, -1), flags, GAP_BUCKETS).items():
            out[(name, flag)] = cell
    return out


@dataclass(frozen=True)
class SignTest:
    positive: int
    negative: int
    pvalue: float


def sign_test(diffs: Iterable[float]) -> SignTest:
    """One-sided sign test for positive differences; zeros and NaNs are dropped."""
    d = np.array([x for x in diffs if not math.isnan(x)])
    pos, neg = int((d > 0).sum()), int((d < 0).sum())
    p = stats.binomtest(pos, pos + neg, 0.5, alternative="greater").pvalue if pos + neg else 1.0
    return SignTest(pos, neg, float(p))


def rate_test(k: int, n: int, k0: int, n0: int) -> float:
    """One-sided binomial p-value that ``k / n`` exceeds the reference rate ``k0 / n0``."""
    if n == 0 or n0 == 0:
        return 1.0
    return float(stats.binomtest(k, n, k0 / n0, alternative="greater").pvalue)


@dataclass
class AnalyticsReport:
    horizon: int
    taocode_item: dict[str, CICell]
    browse_item: dict[str, CICell]
    taocode_category: dict[str, CICell]
    browse_category: dict[str, CICell]
    lift: LiftFit | None
    degree_gap: DegreeGapMatrix
    close_neighbors: dict[str, CICell]
    temporal: dict[tuple[str, bool], CICell]
    totals: dict[str, CICell] = field(default_factory=dict)

    def taocode_vs_browse_p(self) -> float:
        t, b = self.totals["taocode"], self.totals["browse"]
        return rate_test(t.converted, t.total, b.converted, b.total)

    def neighbor_sign_test(self) -> SignTest:
        ci = [self.close_neighbors[b].ci for b in NEIGHBOR_BUCKETS if b in self.close_neighbors]
        return sign_test(np.diff(ci))

    def temporal_sign_test(self) -> SignTest:
        return sign_test(
            self.temporal[(g, True)].ci - self.temporal[(g, False)].ci
            for g in GAP_BUCKETS
            if (g, True) in self.temporal and (g, False) in self.temporal
        )

    def to_text(self) -> str:
        out = io.StringIO()
        w = out.write
        t, b = self.totals["taocode"], self.totals["browse"]
        w(f"# conversion index (horizon {self.horizon}s)\n")
        w(f"mode      records  converted  CI\n")
        w(f"taocode   {t.total:7d}  {t.converted:9d}  {t.ci:.3f}\n")
        w(f"browse    {b.total:7d}  {b.converted:9d}  {b.ci:.3f}\n")
        w(f"taocode > browse one-sided binomial p = {self.taocode_vs_browse_p():.3g}\n\n")

        w("# CI lift vs price index (per category)\n")
        w("category  mean_pi  ci_taocode  ci_browse  lift\n")
        if self.lift is None:
            w("(fewer than 3 categories with both CIs)\n\n")
        else:
            for p in self.lift.points:
                w(f"{p.group:8s}  {p.mean_pi:7.3f}  {p.ci_taocode:10.3f}  {p.ci_browse:9.3f}  {p.lift:.3f}\n")
            w(
                f"slope = {self.lift.slope:.4f}  spearman = {self.lift.spearman:.3f}"
                f"  p = {self.lift.spearman_p:.3g}\n\n"
            )

        w("# CI by sender degree (rows) x receiver degree (columns), '-' = no records\n")
        w("s\\r " + "".join(f"{r:>8d}" for r in range(1, MAX_DEGREE + 1)) + "\n")
        ci = self.degree_gap.ci
        for s in range(MAX_DEGREE):
            cells = "".join("       -" if math.isnan(x) else f"{x:8.2f}" for x in ci[s])
            w(f"{s + 1:3d} {cells}\n")
        w("\n# CI by close-neighbor count\n")
        w("bucket  records  CI\n")
        for k in NEIGHBOR_BUCKETS:
            c = self.close_neighbors.get(k)
            w(f"{k:6s}  {c.total:7d}  {c.ci:.3f}\n" if c else f"{k:6s}        0  -\n")
        st = self.neighbor_sign_test()
        w(f"increasing steps {st.positive}, decreasing {st.negative}, sign-test p = {st.pvalue:.3g}\n\n")

        w("# CI by temporal gap (weeks) and sender purchase\n")
        w("gap  bought  records  CI\n")
        for flag in (False, True):
            for g in GAP_BUCKETS:
                c = self.temporal.get((g, flag))
                w(f"{g:3s}  {int(flag):6d}  {c.total:7d}  {c.ci:.3f}\n" if c else f"{g:3s}  {int(flag):6d}        0  -\n")
        st = self.temporal_sign_test()
        w(f"bought > not bought in {st.positive} of {st.positive + st.negative} gaps, sign-test p = {st.pvalue:.3g}\n")
        return out.getvalue()

    def write_csv(self, directory) -> list[Path]:
        """Plot-ready tables; see the README for the column schema."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        written = []

        def dump(name, header, rows):
            path = d / name
            with open(path, "w", newline="", encoding="utf-8") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(header)
                wr.writerows(rows)
            written.append(path)

        def fmt(x):
            return "" if isinstance(x, float) and math.isnan(x) else (f"{x:.6f}" if isinstance(x, float) else x)

        dump(
            "ci_items.csv",
            ["item", "mode", "records", "converted", "ci"],
            [
                [g, mode, c.total, c.converted, fmt(c.ci)]
                for mode, tab in (("taocode", self.taocode_item), ("browse", self.browse_item))
                for g, c in tab.items()
            ],
        )
        dump(
            "ci_lift.csv",
            ["category", "mean_pi", "ci_taocode", "ci_browse", "lift"],
            [] if self.lift is None else [[p.group, fmt(p.mean_pi), fmt(p.ci_taocode), fmt(p.ci_browse), fmt(p.lift)] for p in self.lift.points],
        )
        ci = self.degree_gap.ci
        dump(
            "degree_gap.csv",
            ["sender_degree", "receiver_degree", "records", "converted", "ci"],
            [
                [s + 1, r + 1, int(self.degree_gap.total[s, r]), int(self.degree_gap.converted[s, r]), fmt(float(ci[s, r]))]
                for s in range(MAX_DEGREE)
                for r in range(MAX_DEGREE)
            ],
        )
        dump(
            "close_neighbors.csv",
            ["bucket", "records", "converted", "ci"],
            [[k, c.total, c.converted, fmt(c.ci)] for k, c in self.close_neighbors.items()],
        )
        dump(
            "temporal_gap.csv",
            ["gap_weeks", "sender_bought", "records", "converted", "ci"],
            [[g, int(f), c.total, c.converted, fmt(c.ci)] for (g, f), c in sorted(self.temporal.items(), key=lambda kv: (kv[0][1], kv[0][0]))],
        )
        return written


def analyze(
    catalog: ItemCatalog,
    diffusion: Sequence[DiffusionRecord],
    browse: Sequence[BrowseRecord],
    purchases: Iterable[PurchaseRecord],
    horizon: int = DEFAULT_HORIZON,
    week: int = WEEK,
) -> AnalyticsReport:
    """All observational tables for one set of logs.

    Input order does not matter: records are sorted before processing.
    """
    diffusion = sorted(diffusion)
    browse = sorted(browse)
    index = PurchaseIndex(purchases)
    graph = MergedGraph(diffusion)
    tflags = conversion_flags(diffusion, index, horizon)
    bflags = conversion_flags(browse, index, horizon)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyGroupWarning)
        t_item = conversion_index(diffusion, index, catalog, "item", horizon, tflags)
        b_item = conversion_index(browse, index, catalog, "item", horizon, bflags)
    t_cat = conversion_index(diffusion, index, catalog, "category", horizon, tflags)
    b_cat = conversion_index(browse, index, catalog, "category", horizon, bflags)
    points = lift_points(t_cat, b_cat, catalog)
    lift = ci_lift_vs_pi(points) if len(points) >= 3 else None
    return AnalyticsReport(
        horizon=horizon,
        taocode_item=t_item,
        browse_item=b_item,
        taocode_category=t_cat,
        browse_category=b_cat,
        lift=lift,
        degree_gap=degree_gap_matrix(diffusion, index, graph, horizon, tflags),
        close_neighbors=close_neighbor_curve(diffusion, index, graph, horizon, tflags),
        temporal=temporal_gap_bars(diffusion, index, horizon, week, tflags),
        totals={
            "taocode": CICell(int(tflags.sum()), len(diffusion)),
            "browse": CICell(int(bflags.sum()), len(browse)),
        },
    )
