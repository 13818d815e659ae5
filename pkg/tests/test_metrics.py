import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stealth.metrics import (
    FAIRNESS,
    Confusion,
    GroupConfusion,
    MetricReport,
    comparable,
    confusion,
    fairness,
    fmt,
    performance,
    score,
)


def group(c):
    return GroupConfusion(c, c, c)


def test_perfect_positives():
    c = confusion([1] * 6, [1] * 6, [True, False] * 3).overall
    assert c == Confusion(tp=6)


def test_total_inversion():
    truth = np.array([0, 1, 1, 0, 1])
    c = confusion(1 - truth, truth, np.ones(5, bool)).overall
    assert c.tp == c.tn == 0


def test_hand_tally():
    pred = [1, 1, 0, 0, 1, 0, 1, 0]
    truth = [1, 0, 0, 1, 1, 0, 0, 0]
    c = confusion(pred, truth, [True] * 8).overall
    # rows: TP, FP, TN, FN, TP, TN, FP, TN
    assert c == Confusion(tp=2, tn=3, fp=2, fn=1)


def test_symmetric_matrix():
    p = performance(group(Confusion(25, 25, 25, 25)))
    assert p == {k: 0.5 for k in ("accuracy", "recall", "precision", "f1", "false_alarm")}


def test_perfect_classifier():
    p = performance(group(Confusion(tp=7, tn=3)))
    assert p["accuracy"] == 1 and p["f1"] == 1 and p["false_alarm"] == 0


def test_precision_undefined():
    p = performance(group(Confusion(tn=5, fn=2)))
    assert p["precision"] is None and p["f1"] is None
    assert fmt(p["precision"]) == "n/a"


def test_identical_subgroups():
    c = Confusion(4, 3, 2, 1)
    f = fairness(GroupConfusion(c + c, c, c))
    assert f == {"aod": 0.0, "eod": 0.0, "spd": 0.0, "di": 1.0}


def test_biased_rule_on_balanced_set():
    priv = np.array([True, False] * 10)
    truth = np.random.default_rng(0).integers(0, 2, 20)
    r = score(priv.astype(int), truth, priv)
    assert r.spd == -1.0 and r.di == 0.0


def test_crafted_twelve_rows():
    # privileged: 2 pos both caught, 4 neg with 1 false alarm
    # unprivileged: 2 pos with 1 caught, 4 neg with 1 false alarm
    pred_p, truth_p = [1, 1, 1, 0, 0, 0], [1, 1, 0, 0, 0, 0]
    pred_u, truth_u = [1, 0, 1, 0, 0, 0], [1, 1, 0, 0, 0, 0]
    priv = [True] * 6 + [False] * 6
    r = score(pred_p + pred_u, truth_p + truth_u, priv)
    assert r.eod == pytest.approx(-0.5)
    assert r.aod == pytest.approx(-0.25)


def test_empty_subgroup_is_undefined():
    r = score([1, 0], [1, 0], [True, True])
    assert all(getattr(r, k) is None for k in FAIRNESS)
    assert r.accuracy == 1.0


def test_length_mismatch():
    with pytest.raises(ValueError):
        score([1, 0], [1], [True, False])


def test_report_columns():
    assert MetricReport.columns() == (
        "accuracy", "recall", "precision", "f1", "false_alarm", "aod", "eod", "spd", "di",
    )


def test_comparable_scale():
    assert comparable("spd", -0.3) == pytest.approx(0.3)
    assert comparable("di", 2.0) == pytest.approx(comparable("di", 0.5))
    assert comparable("di", 0.0) == pytest.approx(math.log(1e3))
    assert comparable("accuracy", 0.7) == 0.7
    with pytest.raises(KeyError):
        comparable("nope", 1.0)


labels = st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.booleans()), min_size=1, max_size=60)


@settings(max_examples=300)
@given(labels)
def test_ranges(rows):
    pred, truth, priv = map(np.array, zip(*rows))
    r = score(pred, truth, priv).as_dict()
    for k in ("accuracy", "recall", "precision", "f1", "false_alarm"):
        assert r[k] is None or 0 <= r[k] <= 1
    for k in ("aod", "eod", "spd"):
        assert r[k] is None or -1 <= r[k] <= 1
    assert r["di"] is None or r["di"] >= 0


@settings(max_examples=300)
@given(labels, st.integers(0, 2**32 - 1))
def test_row_order_irrelevant(rows, seed):
    pred, truth, priv = map(np.array, zip(*rows))
    perm = np.random.default_rng(seed).permutation(len(pred))
    assert score(pred, truth, priv) == score(pred[perm], truth[perm], priv[perm])


def check_swap(pred, truth, priv):
    a = score(pred, truth, priv)
    b = score(pred, truth, ~priv)
    for k in ("aod", "eod", "spd"):
        x, y = getattr(a, k), getattr(b, k)
        assert (x is None) == (y is None)
        if x is not None:
            assert y == pytest.approx(-x, abs=1e-12)
    if a.di is not None and a.di > 0:
        assert b.di == pytest.approx(1 / a.di)


def test_group_swap_on_random_inputs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 80))
        check_swap(rng.integers(0, 2, n), rng.integers(0, 2, n), rng.random(n) < 0.5)
