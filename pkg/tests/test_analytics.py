import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infnet.analytics import (
    WEEK,
    AnalyticsError,
    EmptyGroupWarning,
    LiftPoint,
    MergedGraph,
    analyze,
    ci_lift_vs_pi,
    close_neighbor_counts,
    close_neighbor_curve,
    conversion_flags,
    conversion_index,
    degree_gap_matrix,
    gap_weeks,
    sign_test,
    temporal_gap_bars,
    temporal_gaps,
)
from infnet.events import BrowseRecord, CatalogEntry, DiffusionRecord, ItemCatalog, PurchaseRecord

DAY = 24 * 3600


def _cat(items, category="c"):
    return ItemCatalog(CatalogEntry(p, 1, category) for p in items)


def test_ci_zero_conversions():
    recs = [BrowseRecord(f"u{i}", "p", 10) for i in range(10)]
    tab = conversion_index(recs, [], _cat(["p"]))
    assert tab["p"].ci == 0.0 and tab["p"].total == 10


def test_ci_three_of_twelve():
    recs = [BrowseRecord(f"u{i}", "p", 10) for i in range(12)]
    buys = [PurchaseRecord(f"u{i}", "p", 20) for i in range(3)]
    tab = conversion_index(recs, buys, _cat(["p"]))
    assert (tab["p"].converted, tab["p"].total) == (3, 12)
    assert tab["p"].ci == 25.0


def test_purchase_before_record_does_not_convert():
    recs = [DiffusionRecord("s", "u", "p", 100)]
    assert not conversion_flags(recs, [PurchaseRecord("u", "p", 50)])[0]
    assert not conversion_flags(recs, [PurchaseRecord("u", "p", 100)])[0]
    assert conversion_flags(recs, [PurchaseRecord("u", "p", 101)])[0]


def test_horizon_boundary():
    recs = [BrowseRecord("u", "p", 0)]
    assert conversion_flags(recs, [PurchaseRecord("u", "p", WEEK)], WEEK)[0]
    assert not conversion_flags(recs, [PurchaseRecord("u", "p", WEEK + 1)], WEEK)[0]


def test_sender_is_not_the_converting_user():
    recs = [DiffusionRecord("s", "u", "p", 0)]
    assert not conversion_flags(recs, [PurchaseRecord("s", "p", 5)])[0]


def test_empty_groups_warned_and_excluded():
    cat = ItemCatalog([CatalogEntry("p", 1, "a"), CatalogEntry("q", 2, "b")])
    with pytest.warns(EmptyGroupWarning):
        tab = conversion_index([BrowseRecord("u", "p", 0)], [], cat, "category")
    assert set(tab) == {"a"}


def test_group_by_category():
    cat = ItemCatalog([CatalogEntry("p", 1, "a"), CatalogEntry("q", 2, "a")])
    recs = [BrowseRecord("u", "p", 0), BrowseRecord("v", "q", 0)]
    tab = conversion_index(recs, [PurchaseRecord("v", "q", 3)], cat, "category")
    assert (tab["a"].converted, tab["a"].total) == (1, 2)


def _brute_ci(records, purchases, horizon, key):
    out = {}
    for r in records:
        who = r.receiver if isinstance(r, DiffusionRecord) else r.user
        conv = any(p.user == who and p.item == r.item and r.timestamp < p.timestamp <= r.timestamp + horizon for p in purchases)
        c, t = out.get(key(r), (0, 0))
        out[key(r)] = (c + conv, t + 1)
    return out


@pytest.mark.parametrize("seed", range(10))
def test_ci_matches_direct_counting(seed):
    rng = np.random.default_rng(seed)
    items = [f"p{i}" for i in range(6)]
    cat = ItemCatalog(CatalogEntry(p, i, f"c{i % 3}") for i, p in enumerate(items))
    users = [f"u{i}" for i in range(15)]
    recs = []
    for _ in range(int(rng.integers(200, 600))):
        a, b = rng.choice(len(users), 2, replace=False)
        recs.append(DiffusionRecord(users[a], users[b], items[rng.integers(6)], int(rng.integers(0, 100))))
    buys = [PurchaseRecord(users[rng.integers(15)], items[rng.integers(6)], int(rng.integers(0, 120))) for _ in range(400)]
    for group, key in (("item", lambda r: r.item), ("category", lambda r: cat.category(r.item))):
        tab = conversion_index(recs, buys, cat, group, horizon=20)
        oracle = _brute_ci(recs, buys, 20, key)
        assert {g: (c.converted, c.total) for g, c in tab.items()} == oracle
        assert sum(c.total for c in tab.values()) == len(recs)


def test_spearman_perfectly_monotone():
    pts = [LiftPoint(f"c{i}", float(i), float(i * i + 1), 1.0) for i in range(6)]
    fit = ci_lift_vs_pi(pts)
    assert fit.spearman == pytest.approx(1.0)


def test_constant_lift_has_zero_slope():
    pts = [LiftPoint(f"c{i}", float(i), 2.0, 1.0) for i in range(5)]
    fit = ci_lift_vs_pi(pts)
    assert fit.slope == pytest.approx(0.0, abs=1e-12)
    assert fit.spearman == 0.0


def test_spearman_hand_ranks():
    x = [1.0, 2.0, 3.0, 4.0, 5.0]
    lift = [2.0, 1.0, 4.0, 3.0, 5.0]
    pts = [LiftPoint(f"c{i}", a, b, 1.0) for i, (a, b) in enumerate(zip(x, lift))]
    # rank differences d = (1, -1, 1, -1, 0): rho = 1 - 6 * 4 / (5 * 24) = 0.8
    assert ci_lift_vs_pi(pts).spearman == pytest.approx(0.8)
    xm, ym = np.mean(x), np.mean(lift)
    slope = sum((a - xm) * (b - ym) for a, b in zip(x, lift)) / sum((a - xm) ** 2 for a in x)
    assert ci_lift_vs_pi(pts).slope == pytest.approx(slope)


def test_lift_needs_three_points():
    with pytest.raises(AnalyticsError):
        ci_lift_vs_pi([LiftPoint("a", 1.0, 1.0, 1.0), LiftPoint("b", 2.0, 2.0, 1.0)])


def _toy_log():
    """Star a -> {b, c, d} plus a chain b -> e; degrees a=3, b=2, c=d=e=1."""
    return [
        DiffusionRecord("a", "b", "p", 10),
        DiffusionRecord("a", "c", "p", 11),
        DiffusionRecord("a", "d", "p", 12),
        DiffusionRecord("b", "e", "p", 13),
    ]


def test_degree_gap_toy():
    base = _toy_log()
    recs = base * 5  # 20 records
    buys = [PurchaseRecord("b", "p", 15), PurchaseRecord("e", "p", 14)]
    m = degree_gap_matrix(recs, buys)
    ci = m.ci
    # hand count: (3,2) b converts; (3,1) c, d do not; (2,1) e converts
    assert m.total[2, 1] == 5 and m.converted[2, 1] == 5
    assert m.total[2, 0] == 10 and m.converted[2, 0] == 0
    assert m.total[1, 0] == 5 and m.converted[1, 0] == 5
    assert ci[2, 1] == 100.0 and ci[2, 0] == 0.0
    assert math.isnan(ci[0, 0])
    assert m.total.sum() == 20


def test_degree_gap_single_record_cells_are_binary():
    recs = _toy_log()
    m = degree_gap_matrix(recs, [PurchaseRecord("b", "p", 20)])
    vals = m.ci[m.total == 1]
    assert set(vals.tolist()) <= {0.0, 100.0}


def test_degree_gap_excludes_high_degree():
    recs = [DiffusionRecord("hub", f"u{i}", "p", i) for i in range(12)]
    m = degree_gap_matrix(recs, [])
    assert m.total.sum() == 0


def test_merged_graph_degree_counts_distinct_directed_edges():
    g = MergedGraph([DiffusionRecord("a", "b", "p", 1), DiffusionRecord("a", "b", "q", 2), DiffusionRecord("b", "a", "p", 3)])
    assert g.degree == {"a": 2, "b": 2}


def test_close_neighbor_no_neighbors():
    recs = [DiffusionRecord("s", "u", "p", 10)]
    assert close_neighbor_counts(recs, []).tolist() == [0]
    curve = close_neighbor_curve(recs, [PurchaseRecord("u", "p", 11)])
    assert set(curve) == {"0"} and curve["0"].ci == 100.0


def test_close_neighbor_counts_strictly_earlier():
    recs = [
        DiffusionRecord("x", "w1", "p", 1),
        DiffusionRecord("x", "w2", "p", 2),
        DiffusionRecord("w1", "u", "q", 3),
        DiffusionRecord("w2", "u", "q", 4),
        DiffusionRecord("s", "u", "p", 100),
    ]
    buys = [PurchaseRecord("w1", "p", 50), PurchaseRecord("w2", "p", 150)]
    counts = close_neighbor_counts(recs, buys)
    # w1 received and bought before t=100; w2 bought afterwards; x bought nothing
    assert counts[-1] == 1


def test_close_neighbor_bucket_cap():
    recs = [DiffusionRecord("x", f"w{i}", "p", i) for i in range(6)]
    recs += [DiffusionRecord(f"w{i}", "u", "q", 10 + i) for i in range(6)]
    recs.append(DiffusionRecord("s", "u", "p", 100))
    buys = [PurchaseRecord(f"w{i}", "p", 20) for i in range(6)]
    curve = close_neighbor_curve(recs, buys)
    assert curve["4+"].total == 1


def test_gap_weeks_ceiling():
    assert gap_weeks(10 * DAY) == 2
    assert gap_weeks(7 * DAY) == 1
    assert gap_weeks(1) == 1
    assert gap_weeks(7 * DAY + 1) == 2


def test_temporal_gap_no_ancestor_is_zero():
    gaps, bought = temporal_gaps([DiffusionRecord("b", "c", "p", 100)], [])
    assert gaps.tolist() == [0] and bought.tolist() == [False]


def test_temporal_gap_ten_days():
    recs = [DiffusionRecord("a", "b", "p", 0), DiffusionRecord("b", "c", "p", 10 * DAY)]
    gaps, bought = temporal_gaps(recs, [PurchaseRecord("b", "p", 3 * DAY)])
    assert gaps.tolist() == [0, 2]
    assert bought.tolist() == [False, True]


def test_temporal_gap_ignores_other_items_and_caps():
    recs = [
        DiffusionRecord("a", "b", "q", 0),
        DiffusionRecord("a", "b", "p", 0),
        DiffusionRecord("b", "c", "p", 40 * DAY),
        DiffusionRecord("b", "d", "r", 40 * DAY),
    ]
    gaps, _ = temporal_gaps(recs, [])
    assert gaps.tolist() == [0, 0, 4, 0]


def test_temporal_bars_partition():
    recs = [DiffusionRecord("a", "b", "p", 0), DiffusionRecord("b", "c", "p", 10 * DAY), DiffusionRecord("x", "y", "p", 5)]
    bars = temporal_gap_bars(recs, [PurchaseRecord("b", "p", DAY), PurchaseRecord("c", "p", 11 * DAY)])
    assert bars[("2", True)].ci == 100.0
    assert bars[("0", False)].total == 2
    assert sum(c.total for c in bars.values()) == len(recs)


def test_sign_test():
    st_ = sign_test([1.0, 2.0, 0.5, 3.0])
    assert (st_.positive, st_.negative) == (4, 0)
    assert st_.pvalue == pytest.approx(1 / 16)
    assert sign_test([0.0, math.nan]).pvalue == 1.0


def _random_logs(rng, n_records):
    users = [f"u{i}" for i in range(12)]
    items = [f"p{i}" for i in range(5)]
    cat = ItemCatalog(CatalogEntry(p, i * 2, f"c{i}") for i, p in enumerate(items))
    diff = []
    for _ in range(n_records):
        a, b = rng.choice(len(users), 2, replace=False)
        diff.append(DiffusionRecord(users[a], users[b], items[rng.integers(5)], int(rng.integers(0, 60 * DAY))))
    browse = [BrowseRecord(users[rng.integers(12)], items[rng.integers(5)], int(rng.integers(0, 60 * DAY))) for _ in range(n_records)]
    buys = [PurchaseRecord(users[rng.integers(12)], items[rng.integers(5)], int(rng.integers(0, 60 * DAY))) for _ in range(n_records)]
    return cat, diff, browse, buys


@pytest.mark.parametrize("seed", range(5))
def test_close_neighbor_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    _, diff, _, buys = _random_logs(rng, 300)
    counts = close_neighbor_counts(diff, buys)
    for k, r in enumerate(diff):
        nbrs = {x.receiver for x in diff if x.sender == r.receiver} | {x.sender for x in diff if x.receiver == r.receiver}
        expected = sum(
            1
            for w in nbrs
            if any(x.receiver == w and x.item == r.item and x.timestamp < r.timestamp for x in diff)
            and any(p.user == w and p.item == r.item and p.timestamp < r.timestamp for p in buys)
        )
        assert counts[k] == expected


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_report_is_order_independent(seed):
    rng = np.random.default_rng(seed)
    cat, diff, browse, buys = _random_logs(rng, 120)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyGroupWarning)
        a = analyze(cat, diff, browse, buys).to_text()
        perm = rng.permutation(len(diff))
        b = analyze(cat, [diff[i] for i in perm], browse[::-1], buys[::-1]).to_text()
    assert a == b


def test_report_text_and_csv(tmp_path):
    rng = np.random.default_rng(3)
    cat, diff, browse, buys = _random_logs(rng, 400)
    rep = analyze(cat, diff, browse, buys)
    text = rep.to_text()
    for header in ("# conversion index", "# CI lift", "# CI by sender degree", "# CI by close-neighbor", "# CI by temporal gap"):
        assert header in text
    paths = rep.write_csv(tmp_path)
    assert {p.name for p in paths} == {"ci_items.csv", "ci_lift.csv", "degree_gap.csv", "close_neighbors.csv", "temporal_gap.csv"}
    assert (tmp_path / "degree_gap.csv").read_text().count("\n") == 82
