import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stealth.data import Dataset
from stealth.explain import (
    ExplainConfig,
    InfluenceSet,
    explain_rows,
    influential_set,
    jaccard,
    kernel,
    lime_explain,
    row_rng,
    top_features,
    weighted_ridge,
)
from stealth.learners import ConstantModel, ProbaModel


class Step(ProbaModel):
    """1 where feature j reaches 0.5."""

    def __init__(self, j, n_features):
        self.j, self.n_features = j, n_features

    def predict_proba(self, X):
        X = np.atleast_2d(X)
        return (X[:, self.j] >= 0.5).astype(float)


def uniform_ds(n=60, F=4, seed=0):
    X = np.random.default_rng(seed).random((n, F))
    return Dataset(X, None, tuple(f"f{i}" for i in range(F)))


def test_constant_model_gives_zero_weights():
    ds = uniform_ds()
    cfg = ExplainConfig(n_samples=500)
    for i in range(5):
        exp = lime_explain(ConstantModel(0.7, 4), ds.X[i], ds.X.std(axis=0), cfg, row_rng(0, i))
        assert np.allclose(exp.weights, 0, atol=1e-6)


def test_rule_feature_dominates():
    ds = uniform_ds(F=5)
    model = Step(2, 5)
    x = np.full(5, 0.5)
    hits = 0
    for seed in range(40):
        w = lime_explain(model, x, ds.X.std(axis=0), ExplainConfig(), np.random.default_rng(seed)).weights
        hits += int(np.argmax(np.abs(w)) == 2)
    assert hits / 40 >= 0.95


def test_duplicate_column_shares_weight():
    X = np.random.default_rng(1).random((80, 3))
    X[:, 1] = X[:, 0]
    std = X.std(axis=0)
    x = np.array([0.5, 0.5, 0.5])
    # the explainer perturbs each column independently, so the copy does not carry the signal
    w = lime_explain(Step(0, 3), x, std, ExplainConfig(), np.random.default_rng(0)).weights
    assert abs(w[0]) > 10 * abs(w[1])


def test_influence_set_single_rule_feature():
    ds = uniform_ds(n=50, F=4, seed=3)
    infl = influential_set(Step(1, 4), ds, ExplainConfig(n_samples=300))
    assert isinstance(infl, InfluenceSet)
    assert infl.top1_counts.get("f1", 0) / infl.n_rows >= 0.9
    assert "f1" in infl.features


def test_influence_set_k1_singleton_for_linear_model():
    class Linear(ProbaModel):
        n_features = 3

        def predict_proba(self, X):
            return np.clip(0.2 + 0.6 * np.atleast_2d(X)[:, 2], 0, 1)

    infl = influential_set(Linear(), uniform_ds(n=30, F=3), ExplainConfig(n_samples=200))
    assert infl.features == frozenset({"f2"})
    assert infl.k == 1


def test_kernel_weights_in_unit_interval():
    d = np.linspace(0, 10, 101)
    w = kernel(d, 1.5)
    assert w[0] == 1.0
    assert ((w > 0) | (d > 5)).all() and (w <= 1).all()
    assert (np.diff(w) <= 0).all()


def test_weighted_ridge_recovers_line():
    rng = np.random.default_rng(0)
    Z = rng.random((200, 2))
    t = 0.3 + 2.0 * Z[:, 0] - 1.0 * Z[:, 1]
    beta = weighted_ridge(Z, t, rng.random(200) + 0.1, 0.0)
    assert np.allclose(beta, [2.0, -1.0], atol=1e-9)


def test_explanations_deterministic():
    ds = uniform_ds()
    cfg = ExplainConfig(n_samples=200)
    a = explain_rows(Step(0, 4), ds.X[:5], ds.X.std(axis=0), cfg, seed=4)
    b = explain_rows(Step(0, 4), ds.X[:5], ds.X.std(axis=0), cfg, seed=4)
    assert np.array_equal(a, b)


def test_batch_matches_single_row():
    ds = uniform_ds()
    cfg = ExplainConfig(n_samples=150)
    std = ds.X.std(axis=0)
    W = explain_rows(Step(3, 4), ds.X[:6], std, cfg, seed=2)
    for i in range(6):
        one = lime_explain(Step(3, 4), ds.X[i], std, cfg, row_rng(2, i)).weights
        assert np.allclose(W[i], one, atol=1e-10)


def test_top_features_rules():
    assert top_features(np.array([0.1, -0.5, 0.5]), 1) == [1]
    assert top_features(np.array([0.0, 0.0]), 1) == [0]
    assert top_features(np.array([0.0, 0.2, 0.0]), 2) == [1]


def test_config_validation():
    with pytest.raises(ValueError):
        ExplainConfig(top_k=0)
    with pytest.raises(ValueError):
        ExplainConfig(n_samples=5)
    assert ExplainConfig().width(16) == pytest.approx(3.0)


def test_jaccard_examples():
    assert jaccard({"a"}, {"a"}) == 1.0
    assert jaccard({"a"}, {"b"}) == 0.0
    assert jaccard({"a", "b", "c"}, {"b", "c", "d"}) == 0.5
    assert jaccard(set(), set()) == 1.0


names = st.frozensets(st.sampled_from("abcdefg"))


@settings(max_examples=200)
@given(names, names, names)
def test_jaccard_properties(a, b, c):
    j = jaccard(a, b)
    assert 0 <= j <= 1
    assert j == jaccard(b, a)
    # adding shared elements never lowers overlap
    assert jaccard(a | c, b | c) >= j - 1e-12
