"""Local linear explanations, most-influential feature sets and their Jaccard overlap."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import AbstractSet, Sequence

import numpy as np

from .adversary import perturb_rows
from .data import Dataset
from .learners import Predictor, as_matrix


@dataclass(frozen=True)
class ExplainConfig:
    n_samples: int = 1000
    kernel_width: float | None = None  # None -> 0.75 * sqrt(F)
    ridge: float = 1e-3
    top_k: int = 1
    scale: float = 1.0  # perturbation std as a multiple of column std
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 10:
            raise ValueError("n_samples must be >= 10")
        if self.kernel_width is not None and self.kernel_width <= 0:
            raise ValueError("kernel_width must be > 0")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")

    def width(self, n_features: int) -> float:
        return self.kernel_width if self.kernel_width is not None else 0.75 * math.sqrt(n_features)


@dataclass(frozen=True)
class Explanation:
    weights: np.ndarray
    row: np.ndarray
    n_samples: int


@dataclass(frozen=True)
class InfluenceSet:
    features: frozenset[str]
    k: int
    n_rows: int
    top1_counts: dict[str, int]


class SingularFitError(ArithmeticError):
    pass


def kernel(d: np.ndarray, width: float) -> np.ndarray:
    return np.exp(-(np.asarray(d) ** 2) / width**2)


def _target(model: Predictor, Z: np.ndarray) -> np.ndarray:
    if hasattr(model, "predict_proba"):
        return np.asarray(model.predict_proba(Z), dtype=float)
    return np.asarray(model.predict(Z), dtype=float)


def _neighbourhood(x: np.ndarray, std: np.ndarray, cfg: ExplainConfig, rng: np.random.Generator) -> np.ndarray:
    # first sample is the row itself
    src = np.repeat(x[None, :], cfg.n_samples - 1, axis=0)
    return np.vstack([x[None, :], perturb_rows(src, std, cfg.scale, rng)])


def weighted_ridge(Z: np.ndarray, t: np.ndarray, w: np.ndarray, lam: float) -> np.ndarray:
    """Coefficients of a weighted ridge fit with an unpenalised intercept.

    Solves (Zcᵀ W Zc + λI) β = Zcᵀ W tc on weight-centred data. Works on a
    single problem (Z: n×F) or a batch (Z: b×n×F).
    """
    sw = w.sum(axis=-1, keepdims=True)
    zm = np.einsum("...n,...nf->...f", w, Z) / sw
    tm = (w * t).sum(axis=-1, keepdims=True) / sw
    Zc = Z - zm[..., None, :]
    tc = t - tm
    A = np.einsum("...nf,...n,...ng->...fg", Zc, w, Zc)
    b = np.einsum("...nf,...n,...n->...f", Zc, w, tc)
    A = A + lam * np.eye(Z.shape[-1])
    try:
        beta = np.linalg.solve(A, b[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularFitError("normal matrix is singular; use ridge > 0") from exc
    if not np.isfinite(beta).all():
        raise SingularFitError("non-finite coefficients")
    return beta


def lime_explain(
    model: Predictor, x, std, cfg: ExplainConfig, rng: np.random.Generator
) -> Explanation:
    """Fit a kernel-weighted linear model to the model's answers around ``x``."""
    x = np.asarray(x, dtype=float)
    Z = _neighbourhood(x, np.asarray(std, dtype=float), cfg, rng)
    t = _target(model, Z)
    w = kernel(np.sqrt(((Z - x) ** 2).sum(axis=1)), cfg.width(len(x)))
    return Explanation(weighted_ridge(Z, t, w, cfg.ridge), x, cfg.n_samples)


def row_rng(seed: int, row: int) -> np.random.Generator:
    return np.random.default_rng([seed, row])


def explain_rows(
    model: Predictor, X, std, cfg: ExplainConfig, seed: int | None = None
) -> np.ndarray:
    """Weights for every row of ``X`` (rows × features); row i uses ``row_rng(seed, i)``.

    Same numbers as calling ``lime_explain`` per row, but the model sees all
    neighbourhoods in one batch.
    """
    X = as_matrix(X)
    seed = cfg.seed if seed is None else seed
    std = np.asarray(std, dtype=float)
    n, F = X.shape
    if n == 0:
        return np.zeros((0, F))
    Z = np.stack([_neighbourhood(X[i], std, cfg, row_rng(seed, i)) for i in range(n)])
    t = _target(model, Z.reshape(-1, F)).reshape(n, cfg.n_samples)
    w = kernel(np.sqrt(((Z - X[:, None, :]) ** 2).sum(axis=2)), cfg.width(F))
    out = np.empty((n, F))
    step = 256
    for s in range(0, n, step):
        out[s : s + step] = weighted_ridge(Z[s : s + step], t[s : s + step], w[s : s + step], cfg.ridge)
    return out


def top_features(weights: np.ndarray, k: int) -> list[int]:
    """Indices of the k largest |weight|, ties to the lower index; zero weights
    are skipped unless every weight is zero."""
    mag = np.abs(np.asarray(weights))
    order = np.lexsort((np.arange(len(mag)), -mag))
    nonzero = [int(j) for j in order if mag[j] > 0]
    return (nonzero or [int(order[0])])[:k]


def influential_set(
    model: Predictor,
    test: Dataset,
    cfg: ExplainConfig,
    rng: np.random.Generator | None = None,
    std=None,
) -> InfluenceSet:
    """Union over the test rows of each row's top-k features.

    ``std`` defaults to the column spread of ``test`` itself.
    """
    if len(test) == 0:
        raise ValueError("influential_set needs at least one row")
    X = np.asarray(test.X, dtype=float)
    if std is None:
        std = np.where(np.ptp(X, axis=0) > 0, X.std(axis=0), 0.0)
    seed = int(rng.integers(2**63)) if rng is not None else cfg.seed
    W = explain_rows(model, X, std, cfg, seed)
    chosen: set[str] = set()
    top1: dict[str, int] = {}
    for w in W:
        top = top_features(w, cfg.top_k)
        chosen.update(test.features[j] for j in top)
        name = test.features[top[0]]
        top1[name] = top1.get(name, 0) + 1
    return InfluenceSet(frozenset(chosen), cfg.top_k, len(test), top1)


def jaccard(a: InfluenceSet | AbstractSet, b: InfluenceSet | AbstractSet) -> float:
    A = a.features if isinstance(a, InfluenceSet) else set(a)
    B = b.features if isinstance(b, InfluenceSet) else set(b)
    union = A | B
    if not union:
        return 1.0
    return len(A & B) / len(union)


def write_explanations_csv(path: str | Path, features: Sequence[str], weights: np.ndarray, row_ids=None) -> None:
    """One line per (row, feature): ``row_id,feature,weight``."""
    weights = as_matrix(weights)
    row_ids = range(len(weights)) if row_ids is None else row_ids
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["row_id", "feature", "weight"])
        for rid, w in zip(row_ids, weights):
            for name, v in zip(features, w):
                out.writerow([rid, name, repr(float(v))])
