"""Predictor contract plus a CART tree and random forest written from scratch."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from numba import njit

from .data import Dataset


@runtime_checkable
class Predictor(Protocol):
    """Anything that labels rows. ``predict`` is 1 iff ``predict_proba`` > 0.5."""

    n_features: int

    def predict_proba(self, X: np.ndarray) -> np.ndarray: ...

    def predict(self, X: np.ndarray) -> np.ndarray: ...


def as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[None, :] if X.ndim == 1 else X


def threshold(proba: np.ndarray) -> np.ndarray:
    # an exact 0.5 goes to the unfavorable label
    return (np.asarray(proba) > 0.5).astype(int)


class ProbaModel:
    """Mixin deriving ``predict`` from ``predict_proba``."""

    n_features: int

    def predict_proba(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        return threshold(self.predict_proba(X))


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 50
    max_depth: int | None = None
    min_split: int = 2  # nodes with fewer rows become leaves
    max_features: int | None = None  # None -> ceil(sqrt(F))
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")

    def features_per_split(self, n_features: int) -> int:
        k = self.max_features or math.ceil(math.sqrt(n_features))
        if not 1 <= k <= n_features:
            raise ValueError(f"max_features={k} outside [1, {n_features}]")
        return k


@njit(cache=True)
def _forest_proba(X, feature, thresh, left, right, value):
    n = X.shape[0]
    n_trees = feature.shape[0]
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for t in range(n_trees):
            node = 0
            while left[t, node] >= 0:
                if X[i, feature[t, node]] <= thresh[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            s += value[t, node]
        out[i] = s / n_trees
    return out


class _TreeArrays:
    def __init__(self):
        self.feature: list[int] = []
        self.thresh: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def add(self, value: float) -> int:
        self.feature.append(0)
        self.thresh.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.value) - 1


def _best_split(Xn: np.ndarray, yn: np.ndarray, feats) -> tuple[int, float] | None:
    n = len(yn)
    pos_total = yn.sum()
    n_left = np.arange(1, n)
    n_right = n - n_left
    best_score, best = np.inf, None
    for f in feats:
        v = Xn[:, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        valid = vs[1:] > vs[:-1]
        if not valid.any():
            continue
        pos_left = np.cumsum(yn[order])[:-1]
        p_l = pos_left / n_left
        p_r = (pos_total - pos_left) / n_right
        # size-weighted Gini, up to a constant factor
        score = n_left * p_l * (1 - p_l) + n_right * p_r * (1 - p_r)
        score = np.where(valid, score, np.inf)
        k = int(np.argmin(score))
        if score[k] < best_score:
            best_score, best = score[k], (int(f), float((vs[k] + vs[k + 1]) / 2))
    return best


class DecisionTree(ProbaModel):
    def __init__(self, arrays: _TreeArrays, n_features: int):
        self.n_features = n_features
        self.feature = np.array(arrays.feature, dtype=np.int64)
        self.thresh = np.array(arrays.thresh, dtype=float)
        self.left = np.array(arrays.left, dtype=np.int64)
        self.right = np.array(arrays.right, dtype=np.int64)
        self.value = np.array(arrays.value, dtype=float)

    @property
    def depth(self) -> int:
        depth = {0: 0}
        for node in range(len(self.value)):
            if self.left[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return max(depth.values())

    def predict_proba(self, X) -> np.ndarray:
        X = as_matrix(X)
        return _forest_proba(
            X, self.feature[None], self.thresh[None], self.left[None], self.right[None], self.value[None]
        )


def _fit_tree(X: np.ndarray, y: np.ndarray, cfg: ForestConfig, rng: np.random.Generator) -> DecisionTree:
    F = X.shape[1]
    k = cfg.features_per_split(F)
    arrays = _TreeArrays()
    root = arrays.add(float(y.mean()))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        pos = yn.sum()
        if pos == 0 or pos == len(yn) or len(yn) < cfg.min_split:
            continue
        if cfg.max_depth is not None and depth >= cfg.max_depth:
            continue
        perm = rng.permutation(F)
        Xn = X[idx]
        split = _best_split(Xn, yn, perm[:k])
        if split is None and k < F:
            split = _best_split(Xn, yn, perm[k:])
        if split is None:
            continue
        f, thr = split
        go_left = Xn[:, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        lnode = arrays.add(float(y[li].mean()))
        rnode = arrays.add(float(y[ri].mean()))
        arrays.feature[node], arrays.thresh[node] = f, thr
        arrays.left[node], arrays.right[node] = lnode, rnode
        stack.append((rnode, ri, depth + 1))
        stack.append((lnode, li, depth + 1))
    return DecisionTree(arrays, F)


def _labeled(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    if ds.y is None:
        raise ValueError("training needs a labeled dataset")
    if len(ds) < 1:
        raise ValueError("training needs at least one row")
    return np.asarray(ds.X, dtype=float), np.asarray(ds.y, dtype=float)


def train_tree(ds: Dataset, cfg: ForestConfig, rng: np.random.Generator) -> DecisionTree:
    """Greedy Gini tree; candidate features are re-drawn at every node."""
    X, y = _labeled(ds)
    return _fit_tree(X, y, cfg, rng)


class RandomForest(ProbaModel):
    def __init__(self, trees: list[DecisionTree]):
        self.trees = trees
        self.n_features = trees[0].n_features
        width = max(len(t.value) for t in trees)

        def stack(attr, fill, dtype):
            out = np.full((len(trees), width), fill, dtype=dtype)
            for i, t in enumerate(trees):
                arr = getattr(t, attr)
                out[i, : len(arr)] = arr
            return out

        self._feature = stack("feature", 0, np.int64)
        self._thresh = stack("thresh", 0.0, float)
        self._left = stack("left", -1, np.int64)
        self._right = stack("right", -1, np.int64)
        self._value = stack("value", 0.0, float)

    def predict_proba(self, X) -> np.ndarray:
        X = np.ascontiguousarray(as_matrix(X))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return _forest_proba(X, self._feature, self._thresh, self._left, self._right, self._value)


def tree_rng(seed: int, index: int) -> np.random.Generator:
    """RNG stream of tree ``index`` in a forest seeded with ``seed``."""
    return np.random.default_rng([seed, index])


def train_forest(ds: Dataset, cfg: ForestConfig, rng: np.random.Generator | None = None) -> RandomForest:
    """Bagged Gini trees; proba is the mean of the tree probabilities.

    Tree i draws from ``tree_rng(seed, i)`` where ``seed`` comes from ``rng``
    when given, else from ``cfg.seed``.
    """
    X, y = _labeled(ds)
    seed = int(rng.integers(2**63)) if rng is not None else cfg.seed
    n = len(y)
    trees = []
    for i in range(cfg.n_trees):
        r = tree_rng(seed, i)
        if cfg.bootstrap:
            idx = r.integers(0, n, n)
            trees.append(_fit_tree(X[idx], y[idx], cfg, r))
        else:
            trees.append(_fit_tree(X, y, cfg, r))
    return RandomForest(trees)


class ConstantModel(ProbaModel):
    def __init__(self, proba: float, n_features: int):
        self.proba = float(proba)
        self.n_features = n_features

    def predict_proba(self, X) -> np.ndarray:
        return np.full(len(as_matrix(X)), self.proba)


class CountingOracle(ProbaModel):
    """Wraps a black box and counts every row it is asked to label."""

    def __init__(self, model: Predictor):
        self.model = model
        self.n_features = model.n_features
        self.queries = 0

    def predict_proba(self, X) -> np.ndarray:
        X = as_matrix(X)
        self.queries += len(X)
        return self.model.predict_proba(X)

    def predict(self, X) -> np.ndarray:
        X = as_matrix(X)
        self.queries += len(X)
        return self.model.predict(X)
