import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infnet.events import (
    ConfigError,
    DiffusionRecord,
    ParseError,
    PurchaseRecord,
    SnapshotVersionError,
    ValidationError,
    build_dynamic_network,
    build_time_grid,
    load_network,
    load_queries,
    load_records,
    materialize_queries,
    save_network,
    save_queries,
)


def test_load_empty_file(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("")
    assert load_records(p, "diffusion") == []


def test_load_single_diffusion_line(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("a b p1 100\n")
    assert load_records(p, "diffusion") == [DiffusionRecord("a", "b", "p1", 100)]


def test_load_self_loop_cites_line(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("# header\na b p 1\nc c p 2\n")
    with pytest.raises(ValidationError, match="line 3"):
        load_records(p, "diffusion")


def test_load_malformed_cites_line(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("u p 1\nu p x\n")
    with pytest.raises(ParseError, match="line 2"):
        load_records(p, "purchase")


def test_load_catalog_and_comments(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# item pi cat\np1 3 shoes\n\np2 0 books\n")
    cat = load_records(p, "catalog")
    assert [(e.item, e.price_index, e.category) for e in cat] == [("p1", 3, "shoes"), ("p2", 0, "books")]


def test_grid_four_weeks():
    g = build_time_grid(0, 604800, 4)
    assert g.steps == [(0, 604800), (604800, 1209600), (1209600, 1814400), (1814400, 2419200)]


def test_grid_unit_steps():
    assert build_time_grid(0, 1, 2).steps == [(0, 1), (1, 2)]


@pytest.mark.parametrize("args", [(0, 0, 4), (0, 10, 1)])
def test_grid_rejects_bad_config(args):
    with pytest.raises(ConfigError):
        build_time_grid(*args)


def test_network_empty():
    net = build_dynamic_network([], build_time_grid(0, 10, 3))
    assert net.edges == [{}, {}, {}]


def test_network_hand_example():
    recs = [DiffusionRecord("a", "b", "p", 5), DiffusionRecord("a", "b", "q", 6), DiffusionRecord("b", "c", "p", 15)]
    net = build_dynamic_network(recs, build_time_grid(0, 10, 2))
    a, b, c = (net.user_index[x] for x in "abc")
    p, q = net.item_index["p"], net.item_index["q"]
    assert set(net.edges[0]) == {(a, b)}
    assert {i for i, _ in net.edges[0][(a, b)]} == {p, q}
    assert set(net.edges[1]) == {(b, c)}
    assert [i for i, _ in net.edges[1][(b, c)]] == [p]


def test_network_drops_boundary_record():
    net = build_dynamic_network([DiffusionRecord("a", "b", "p", 20)], build_time_grid(0, 10, 2))
    assert net.dropped == 1
    assert net.event_count() == 0


records_strategy = st.lists(
    st.tuples(st.integers(0, 6), st.integers(0, 6), st.integers(0, 3), st.integers(0, 60)).filter(
        lambda r: r[0] != r[1]
    ),
    max_size=60,
)


@settings(max_examples=60, deadline=None)
@given(records_strategy)
def test_network_conservation(raw):
    recs = [DiffusionRecord(f"u{s}", f"u{r}", f"p{i}", t) for s, r, i, t in raw]
    grid = build_time_grid(5, 10, 4)
    net = build_dynamic_network(recs, grid)
    in_grid = sum(1 for r in recs if 5 <= r.timestamp < 45)
    assert net.event_count() == in_grid
    assert net.dropped == len(recs) - in_grid
    for t, step in enumerate(net.edges):
        expected = {
            (net.user_index[r.sender], net.user_index[r.receiver])
            for r in recs
            if grid.step_of(r.timestamp) == t
        }
        assert set(step) == expected


def test_query_positive_and_negative():
    recs = [DiffusionRecord("s", "u", "p", 1), DiffusionRecord("s", "w", "p", 2)]
    buys = [PurchaseRecord("u", "p", 12), PurchaseRecord("w", "q", 13)]
    net = build_dynamic_network(recs, build_time_grid(0, 10, 2))
    qs = {q.user: q for q in materialize_queries(net, buys, 1)}
    assert qs["u"].label == 1 and qs["u"].step == 1
    assert qs["w"].label == 0


def test_query_dedup_over_senders():
    recs = [DiffusionRecord("s1", "u", "p", 1), DiffusionRecord("s2", "u", "p", 2), DiffusionRecord("s1", "u", "p", 3)]
    net = build_dynamic_network(recs, build_time_grid(0, 10, 2))
    qs = materialize_queries(net, [], 1)
    pairs = {(r.receiver, r.item) for r in recs}
    assert len(qs) == len(pairs) == 1


def test_query_cold_flag():
    recs = [DiffusionRecord("s", "u", "p", 101), DiffusionRecord("s", "w", "p", 102)]
    buys = [PurchaseRecord("u", "x", 50)]
    net = build_dynamic_network(recs, build_time_grid(100, 10, 2))
    qs = {q.user: q for q in materialize_queries(net, buys, 1)}
    assert not qs["u"].cold
    assert qs["w"].cold


def test_query_step_range():
    net = build_dynamic_network([], build_time_grid(0, 10, 3))
    for bad in (0, 3):
        with pytest.raises(ConfigError):
            materialize_queries(net, [], bad)


@settings(max_examples=40, deadline=None)
@given(records_strategy)
def test_query_wellformed(raw):
    recs = [DiffusionRecord(f"u{s}", f"u{r}", f"p{i}", t) for s, r, i, t in raw]
    net = build_dynamic_network(recs, build_time_grid(0, 15, 4))
    for step in range(1, 4):
        for q in materialize_queries(net, [], step):
            v, p = net.user_index[q.user], net.item_index[q.item]
            assert any(
                dst == v and any(i == p for i, _ in evs)
                for (src, dst), evs in net.edges[step - 1].items()
            )


def test_snapshot_roundtrip_is_byte_stable(tmp_path):
    rng = np.random.default_rng(3)
    recs = [
        DiffusionRecord(f"u{a}", f"u{b}", f"p{rng.integers(5)}", int(rng.integers(0, 40)))
        for a, b in rng.integers(0, 9, size=(50, 2))
        if a != b
    ]
    grid = build_time_grid(0, 10, 4)
    save_network(tmp_path / "a.net", build_dynamic_network(recs, grid))
    save_network(tmp_path / "b.net", build_dynamic_network(list(reversed(recs)), grid))
    assert (tmp_path / "a.net").read_bytes() == (tmp_path / "b.net").read_bytes()
    net = load_network(tmp_path / "a.net")
    save_network(tmp_path / "c.net", net)
    assert (tmp_path / "c.net").read_bytes() == (tmp_path / "a.net").read_bytes()


def test_snapshot_version_mismatch(tmp_path):
    p = tmp_path / "x.net"
    p.write_text("INFNET-NETWORK 0\n{}\n")
    with pytest.raises(SnapshotVersionError, match="version 0"):
        load_network(p)


def test_queries_roundtrip(tmp_path):
    recs = [DiffusionRecord("s", "u", "p", 1)]
    net = build_dynamic_network(recs, build_time_grid(0, 10, 2))
    qs = materialize_queries(net, [PurchaseRecord("u", "p", 11)], 1)
    save_queries(tmp_path / "q.txt", qs)
    assert load_queries(tmp_path / "q.txt") == qs
