from dataclasses import replace

import numpy as np
import pytest

from infnet.eval import (
    VARIANTS,
    LogisticRegression,
    LRFeatures,
    Split,
    SplitError,
    TrainConfig,
    TrainingDivergence,
    ablate,
    ablation_table,
    lr_baseline,
    make_batches,
    shuffled_labels,
    split_queries,
    train,
    variant_config,
)
from infnet.events import (
    CatalogEntry,
    DiffusionRecord,
    ItemCatalog,
    PurchaseIndex,
    PurchaseRecord,
    Query,
    build_dynamic_network,
    build_time_grid,
)
from infnet.model import ModelConfig
from infnet.sampler import FeatureConfig

TINY = ModelConfig(hidden=6, structural_layers=1, diffusion_layers=1)


def _queries(steps):
    return [Query(f"u{i}", "p", s, i % 2, False) for i, s in enumerate(steps)]


def test_split_seven_three():
    qs = _queries([1] * 5 + [2] * 5 + [3] * 4)
    sp = split_queries(qs, seed=0)
    assert (len(sp.train), len(sp.validation), len(sp.test)) == (7, 3, 4)
    assert all(qs[i].step == 3 for i in sp.test)
    assert set(sp.train) | set(sp.validation) | set(sp.test) == set(range(len(qs)))
    assert not set(sp.train) & set(sp.validation)


def test_split_reseeded_identical():
    qs = _queries([1, 2, 3] * 20)
    assert split_queries(qs, 4) == split_queries(qs, 4)
    assert split_queries(qs, 4).train != split_queries(qs, 5).train


def test_split_needs_three_day_tags():
    with pytest.raises(SplitError):
        split_queries(_queries([3] * 6), 0)
    with pytest.raises(SplitError):
        split_queries(_queries([1, 2] * 6), 0)


def test_batches_share_step_count(small_world):
    data = small_world.data
    idx = list(small_world.split.train)
    batches = make_batches(idx, data, 100, np.random.default_rng(0))
    assert sorted(i for b in batches for i in b) == sorted(idx)
    for b in batches:
        assert len(b) <= 100
        assert len({data.subgraphs[i].n_steps for i in b}) == 1


def _subset(world, n_train=200, n_val=80, n_test=150):
    sp = world.split
    return Split(sp.train[:n_train], sp.validation[:n_val], sp.test[:n_test], "subset")


def test_patience_zero_runs_one_epoch(small_world):
    res = train(TINY, small_world.data, _subset(small_world), TrainConfig(max_epochs=10, patience=0, batch_size=64))
    assert len(res.history) == 1 and res.best_epoch == 1


def test_training_is_deterministic(small_world):
    sp = _subset(small_world)
    hyper = TrainConfig(max_epochs=3, patience=5, batch_size=64, seed=3)
    a = train(TINY, small_world.data, sp, hyper)
    b = train(TINY, small_world.data, sp, hyper)
    assert [(e.train_loss, e.val_auc_pr) for e in a.history] == [(e.train_loss, e.val_auc_pr) for e in b.history]
    sa, sb = a.model.state_dict(), b.model.state_dict()
    assert all(np.array_equal(sa[k], sb[k]) for k in sa)
    np.testing.assert_array_equal(a.test_scores, b.test_scores)


def test_training_reduces_loss(small_world):
    res = train(ModelConfig(hidden=8), small_world.data, _subset(small_world, 600, 200, 300), TrainConfig(max_epochs=6, patience=10, batch_size=64))
    assert res.history[-1].train_loss < res.history[0].train_loss
    assert 0.0 <= res.test.auc_roc <= 1.0
    assert set(res.test.strata) == {"cold", "warm"}


def test_divergence_aborts(small_world):
    data = small_world.data
    broken = data.with_labels([q.label for q in data.queries])
    i = small_world.split.train[0]
    feat = broken.subgraphs[i].node_feat.copy()  # arrays are shared with the fixture
    feat[0, 0] = np.nan
    broken.subgraphs[i] = replace(broken.subgraphs[i], node_feat=feat)
    with pytest.raises(TrainingDivergence, match="epoch 1"):
        train(TINY, broken, _subset(small_world), TrainConfig(max_epochs=2, batch_size=1000))


def test_variant_configs():
    base = ModelConfig()
    assert variant_config(base, "encoder=gru").encoder == "gru"
    assert variant_config(base, "-taocode").masks == frozenset({"taocode"})
    assert variant_config(base, "-attention").use_edge_attention is False
    assert variant_config(base, "-structural").use_structural_block is False
    assert len(VARIANTS) == 8
    with pytest.raises(KeyError):
        variant_config(base, "-everything")
    with pytest.raises(ValueError):
        variant_config(base, "encoder=lstm")


def test_ablate_empty_is_base_only(small_world):
    rows = ablate(TINY, [], small_world.data, _subset(small_world), TrainConfig(max_epochs=1, batch_size=128))
    assert [r.name for r in rows] == ["base"]
    table = ablation_table(rows)
    assert table.count("\n") == 2 and table.splitlines()[1].startswith("base")


def test_ablate_rows_share_split(small_world):
    rows = ablate(TINY, ["-item", "encoder=mean"], small_world.data, _subset(small_world), TrainConfig(max_epochs=1, batch_size=128))
    assert [r.name for r in rows] == ["base", "-item", "encoder=mean"]
    assert len({r.result.test.n for r in rows}) == 1


def test_shuffled_labels_only_touch_given_indices(small_world):
    data = small_world.data
    sp = small_world.split
    shuf = shuffled_labels(data, sp.train + sp.validation, seed=1)
    for i in sp.test:
        assert shuf.queries[i].label == data.queries[i].label
        assert shuf.subgraphs[i].query.label == data.queries[i].label
    before = sorted(data.queries[i].label for i in sp.train + sp.validation)
    after = sorted(shuf.queries[i].label for i in sp.train + sp.validation)
    assert before == after


# ---- logistic-regression baseline -------------------------------------------------


def test_lr_zero_variance_feature_gets_zero_weight():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(400, 1))
    X = np.hstack([x, np.full((400, 1), 3.0)])
    y = (x[:, 0] + 0.3 * rng.normal(size=400) > 0).astype(float)
    m = LogisticRegression().fit(X, y)
    assert abs(m.weights[1]) < 1e-12
    assert m.weights[0] > 1.0


def test_lr_recovers_logistic_coefficients():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(20000, 2))
    p = 1 / (1 + np.exp(-(1.5 * X[:, 0] - 0.7 * X[:, 1] + 0.2)))
    y = (rng.random(20000) < p).astype(float)
    m = LogisticRegression(l2=0.0, n_iter=3000).fit(X, y)
    np.testing.assert_allclose(m.weights / m.scale, [1.5, -0.7], atol=0.08)


def test_lr_features_by_hand():
    grid = build_time_grid(0, 100, 3)
    recs = [
        DiffusionRecord("a", "u", "cheap", 10),
        DiffusionRecord("b", "u", "dear", 20),
        DiffusionRecord("u", "c", "cheap", 30),
        DiffusionRecord("a", "u", "cheap", 150),
    ]
    net = build_dynamic_network(recs, grid)
    cat = ItemCatalog([CatalogEntry("cheap", 0, "x"), CatalogEntry("dear", 9, "x")])
    cfg = FeatureConfig.equal_width(0, 9, 2)
    purchases = PurchaseIndex([PurchaseRecord("u", "dear", 50), PurchaseRecord("u", "cheap", 60), PurchaseRecord("u", "dear", 250)])
    f = LRFeatures(net, cat, purchases, cfg, spend_window=120)
    x = f.query_features(Query("u", "cheap", 2, 0, False))
    # layout: bin one-hot (2), spend, in-degree, out-degree, sent per bin (2), received per bin (2)
    expected = np.zeros(f.dim)
    expected[0] = 1.0  # "cheap" is in bin 0
    expected[2] = 0.0  # spend window [80, 200) holds no purchase
    expected[3] = np.log1p(2)  # in-neighbors a, b over steps 0..1
    expected[4] = np.log1p(1)  # out-neighbor c
    expected[5:7] = np.log1p([1, 0])
    expected[7:9] = np.log1p([2, 1])
    np.testing.assert_allclose(x, expected)
    x1 = f.query_features(Query("u", "dear", 1, 0, False))
    assert x1[1] == 1.0
    assert x1[2] == pytest.approx(np.log1p(9 + 0))  # window [-20, 100): dear (PI 9) and cheap (PI 0)


def test_lr_baseline_runs(small_world):
    w = small_world
    _, res, scores = lr_baseline(w.queries, w.split, LRFeatures(w.network, w.catalog, w.purchases, w.features))
    assert len(scores) == len(w.split.test)
    assert 0.5 < res.auc_roc < 1.0
