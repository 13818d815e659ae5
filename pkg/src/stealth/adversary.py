"""The lying scaffold: an out-of-distribution detector that hides a biased model.

Rows that look like real data get the biased answer; rows that look like
explainer perturbations get the innocuous one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, SchemaError
from .learners import ForestConfig, Predictor, ProbaModel, as_matrix, train_forest


@dataclass(frozen=True)
class PerturbConfig:
    per_row: int = 1
    scale: float = 1.0  # noise std as a multiple of each column's std
    seed: int = 0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("perturbation scale must be > 0")
        if self.per_row < 1:
            raise ValueError("per_row must be >= 1")


def perturb_rows(X: np.ndarray, std: np.ndarray, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian noise (std = scale * column std) added to each row, clipped to [0, 1]."""
    noise = rng.standard_normal(X.shape) * (scale * np.asarray(std, dtype=float))
    return np.clip(X + noise, 0.0, 1.0)


def gen_perturbations(ds: Dataset, cfg: PerturbConfig, rng: np.random.Generator) -> Dataset:
    if len(ds) < 2:
        raise ValueError("need at least 2 rows to estimate column spread")
    X = np.asarray(ds.X, dtype=float)
    std = np.where(np.ptp(X, axis=0) > 0, X.std(axis=0), 0.0)
    src = np.repeat(X, cfg.per_row, axis=0)
    return Dataset(perturb_rows(src, std, cfg.scale, rng), None, ds.features)


class OODDetector(ProbaModel):
    """Forest voting 1 for out-of-distribution rows; keeps its held-out accuracy."""

    def __init__(self, forest: Predictor, holdout_accuracy: float | None):
        self.forest = forest
        self.n_features = forest.n_features
        self.holdout_accuracy = holdout_accuracy

    def predict_proba(self, X) -> np.ndarray:
        return self.forest.predict_proba(X)


def train_ood_detector(
    real: Dataset,
    fake: Dataset,
    cfg: ForestConfig,
    rng: np.random.Generator | None = None,
    holdout: float = 0.2,
) -> OODDetector:
    """Train real (0) vs fake (1) on a balanced mix, scoring a held-out slice."""
    if len(real) == 0 or len(fake) == 0:
        raise ValueError("both real and fake rows are required")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    k = min(len(real), len(fake))
    ri = rng.permutation(len(real))[:k]
    # equal sizes usually means fake[i] was derived from real[i]: hold out the same
    # positions from both sides so no held-out row has a twin in training
    fi = ri if len(real) == len(fake) else rng.permutation(len(fake))[:k]
    h = int(round(holdout * k)) if k >= 5 else 0
    R, Fk = np.asarray(real.X, dtype=float), np.asarray(fake.X, dtype=float)

    def mix(a, b):
        X = np.vstack([R[a], Fk[b]])
        return X, np.r_[np.zeros(len(a), dtype=int), np.ones(len(b), dtype=int)]

    X, y = mix(ri[h:], fi[h:])
    Xt, yt = mix(ri[:h], fi[:h])
    forest = train_forest(Dataset(X, y, real.features), cfg, rng)
    acc = float((forest.predict(Xt) == yt).mean()) if h else None
    return OODDetector(forest, acc)


class RuleModel(ProbaModel):
    def __init__(self, n_features: int):
        self.n_features = n_features


class BiasedModel(RuleModel):
    """Favorable label for the privileged group only."""

    def __init__(self, ds: Dataset, protected: str):
        if protected not in ds.rules:
            raise SchemaError(f"unknown protected attribute {protected!r}")
        super().__init__(ds.n_features)
        self.protected = protected
        self.rule = ds.rules[protected]

    def predict_proba(self, X) -> np.ndarray:
        X = as_matrix(X)
        return self.rule.is_privileged(X[:, self.rule.column]).astype(float)


class InnocuousModel(RuleModel):
    """Favorable label iff one non-protected feature reaches its training median."""

    def __init__(self, ds: Dataset, feature: str):
        if feature in ds.rules:
            raise SchemaError(f"innocuous feature {feature!r} is a protected attribute")
        super().__init__(ds.n_features)
        self.feature = feature
        self.column = ds.column(feature)
        self.median = float(np.median(np.asarray(ds.X, dtype=float)[:, self.column]))

    def predict_proba(self, X) -> np.ndarray:
        X = as_matrix(X)
        return (X[:, self.column] >= self.median).astype(float)


def make_biased_model(ds: Dataset, protected: str) -> BiasedModel:
    return BiasedModel(ds, protected)


def make_innocuous_model(ds: Dataset, legit_feature: str) -> InnocuousModel:
    return InnocuousModel(ds, legit_feature)


def pick_legit_feature(ds: Dataset) -> str:
    """Non-protected feature most correlated (in absolute value) with the label."""
    X = np.asarray(ds.X, dtype=float)
    y = np.asarray(ds.y, dtype=float)
    best, best_r = None, -1.0
    for j, name in enumerate(ds.features):
        if name in ds.rules:
            continue
        col = X[:, j]
        r = 0.0 if col.std() == 0 or y.std() == 0 else abs(float(np.corrcoef(col, y)[0, 1]))
        if r > best_r:
            best, best_r = name, r
    if best is None:
        raise SchemaError("no non-protected feature available for the decoy model")
    return best


class Scaffold(ProbaModel):
    """Routes each query to the innocuous model if flagged OOD, else to the biased one.

    ``routed_biased`` / ``routed_innocuous`` count answered rows per route.
    """

    def __init__(self, ood_detector: Predictor, biased_model: Predictor, innocuous_model: Predictor):
        n = {ood_detector.n_features, biased_model.n_features, innocuous_model.n_features}
        if len(n) != 1:
            raise ValueError("scaffold parts disagree on the feature count")
        self.n_features = n.pop()
        self.ood_detector = ood_detector
        self.biased_model = biased_model
        self.innocuous_model = innocuous_model
        self.routed_biased = 0
        self.routed_innocuous = 0

    def reset_counters(self) -> None:
        self.routed_biased = self.routed_innocuous = 0

    def route(self, X) -> np.ndarray:
        """True where the query goes to the innocuous model."""
        return self.ood_detector.predict(as_matrix(X)) == 1

    def predict_proba(self, X) -> np.ndarray:
        X = as_matrix(X)
        ood = self.route(X)
        out = np.empty(len(X))
        if ood.any():
            out[ood] = self.innocuous_model.predict_proba(X[ood])
        if (~ood).any():
            out[~ood] = self.biased_model.predict_proba(X[~ood])
        n_ood = int(ood.sum())
        self.routed_innocuous += n_ood
        self.routed_biased += len(X) - n_ood
        return out


def scaffold_predict(s: Scaffold, X) -> np.ndarray:
    return s.predict(X)


def build_scaffold(
    train: Dataset,
    protected: str,
    legit_feature: str | None,
    perturb: PerturbConfig,
    forest: ForestConfig,
    rng: np.random.Generator,
) -> Scaffold:
    """Train the detector on ``train`` vs its perturbations and wire the two decoys."""
    fake = gen_perturbations(train, perturb, rng)
    detector = train_ood_detector(train, fake, forest, rng)
    legit = legit_feature or pick_legit_feature(train)
    return Scaffold(detector, make_biased_model(train, protected), make_innocuous_model(train, legit))
