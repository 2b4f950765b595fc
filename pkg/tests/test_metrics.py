import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infnet.eval import UndefinedMetricError, auc_pr, auc_roc, metric_result, stratify_cold_warm


def roc_oracle(scores, labels):
    """Count (positive, negative) pairs ordered correctly; ties earn one half."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    credit = 0.0
    for a in pos:
        for b in neg:
            credit += 1.0 if a > b else 0.5 if a == b else 0.0
    return credit / (len(pos) * len(neg))


def pr_oracle(scores, labels):
    """Sweep every distinct threshold high to low, recounting from scratch each time."""
    total_pos = sum(labels)
    area, prev_recall = 0.0, 0.0
    for tau in sorted(set(scores), reverse=True):
        picked = [y for s, y in zip(scores, labels) if s >= tau]
        tp = sum(picked)
        recall = tp / total_pos
        area += (recall - prev_recall) * (tp / len(picked))
        prev_recall = recall
    return area


def test_roc_worked_example():
    s, y = [0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]
    assert auc_roc(s, y) == pytest.approx(0.75, abs=1e-12)
    assert roc_oracle(s, y) == 0.75


def test_pr_worked_example():
    # thresholds 0.8 (P=1, R=1/2), 0.4 (P=1/2, R=1/2), 0.35 (P=2/3, R=1)
    assert auc_pr([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.5 * 1 + 0.5 * 2 / 3, abs=1e-12)


def test_perfect_separation():
    s, y = [0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]
    assert auc_roc(s, y) == 1.0
    assert auc_pr(s, y) == 1.0


def test_all_tied_scores():
    y = [0, 1, 0, 1, 1]
    assert auc_roc([0.3] * 5, y) == 0.5
    assert auc_pr([0.3] * 5, y) == pytest.approx(3 / 5)


def test_single_class_is_undefined():
    with pytest.raises(UndefinedMetricError):
        auc_roc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedMetricError):
        auc_pr([0.1, 0.2], [0, 0])
    res = metric_result([0.1, 0.2], [0, 0])
    assert res.auc_roc is None and res.auc_pr is None and res.n == 2


def test_length_mismatch_and_bad_labels():
    with pytest.raises(ValueError):
        auc_roc([0.1, 0.2, 0.3], [0, 1])
    with pytest.raises(ValueError):
        auc_roc([0.1, 0.2], [0, 2])


@pytest.mark.parametrize("seed", range(100))
def test_oracle_equivalence_with_ties(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 201))
    # few distinct values so that ties are common
    scores = rng.integers(0, max(2, n // 4), size=n) / 7.0
    labels = rng.integers(0, 2, size=n)
    labels[0], labels[1] = 0, 1
    assert abs(auc_roc(scores, labels) - roc_oracle(scores.tolist(), labels.tolist())) < 1e-9
    assert abs(auc_pr(scores, labels) - pr_oracle(scores.tolist(), labels.tolist())) < 1e-9


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 30), st.integers(0, 1)), min_size=2, max_size=80),
    st.sampled_from(["exp", "cube", "affine", "logit"]),
)
def test_monotone_transform_invariance(pairs, kind):
    scores = np.array([p[0] for p in pairs], dtype=float) / 31.0 + 0.01
    labels = np.array([p[1] for p in pairs])
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    f = {
        "exp": np.exp,
        "cube": lambda x: x**3,
        "affine": lambda x: 5.0 * x - 2.0,
        "logit": lambda x: np.log(x / (1.01 - x)),
    }[kind]
    assert abs(auc_roc(f(scores), labels) - auc_roc(scores, labels)) < 1e-9
    assert abs(auc_pr(f(scores), labels) - auc_pr(scores, labels)) < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=2, max_size=60))
def test_metrics_in_unit_interval(pairs):
    scores = [p[0] for p in pairs]
    labels = [p[1] for p in pairs]
    if len(set(labels)) < 2:
        return
    assert 0.0 <= auc_roc(scores, labels) <= 1.0
    assert 0.0 < auc_pr(scores, labels) <= 1.0


def test_stratify_all_warm_has_no_cold():
    res = stratify_cold_warm([0.1, 0.9, 0.3], [0, 1, 0], [False] * 3)
    assert res.strata["cold"] is None
    assert res.strata["warm"].auc_roc == 1.0


def test_stratify_hand_built():
    scores = np.array([0.9, 0.2, 0.6, 0.4, 0.7, 0.1])
    labels = np.array([1, 0, 0, 1, 1, 0])
    cold = np.array([True, True, True, False, False, False])
    res = stratify_cold_warm(scores, labels, cold)
    for name, mask in (("cold", cold), ("warm", ~cold)):
        sub = res.strata[name]
        assert sub.auc_roc == pytest.approx(roc_oracle(scores[mask].tolist(), labels[mask].tolist()), abs=1e-12)
        assert sub.auc_pr == pytest.approx(pr_oracle(scores[mask].tolist(), labels[mask].tolist()), abs=1e-12)
    assert res.strata["cold"].auc_roc == 1.0  # 0.9 over 0.2 and 0.6
    assert res.strata["warm"].auc_roc == 1.0  # 0.4 and 0.7 over 0.1
    assert res.auc_roc == pytest.approx(roc_oracle(scores.tolist(), labels.tolist()))


def test_identical_scores_and_label_mix_give_identical_strata():
    s = [0.2, 0.8, 0.5, 0.2, 0.8, 0.5]
    y = [0, 1, 1, 0, 1, 1]
    res = stratify_cold_warm(s, y, [True, True, True, False, False, False])
    assert res.strata["cold"].auc_roc == res.strata["warm"].auc_roc
    assert res.strata["cold"].auc_pr == res.strata["warm"].auc_pr


def test_single_class_stratum_reports_none_metrics():
    res = stratify_cold_warm([0.1, 0.9, 0.4, 0.3], [0, 1, 0, 0], [True, False, True, False])
    assert res.strata["cold"].auc_roc is None
    assert res.strata["warm"].auc_roc == 1.0
