"""Bias-mitigation baselines reduced to their one-paragraph descriptions.

These are simplified stand-ins for FairMASK, Fair-SMOTE and MAAT, not
replications of those systems: masking uses a single tree, rebalancing
duplicates real rows instead of interpolating, and the MAAT ensemble is an
unweighted mean.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, SchemaError
from .learners import ForestConfig, Predictor, ProbaModel, as_matrix, train_forest, train_tree

log = logging.getLogger(__name__)


@dataclass
class MitigatedPipeline(ProbaModel):
    model: Predictor
    transform: str
    protected: str
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        self.n_features = self.model.n_features

    def predict_proba(self, X) -> np.ndarray:
        return self.model.predict_proba(X)


def _rule(ds: Dataset, protected: str):
    try:
        return ds.rules[protected]
    except KeyError:
        raise SchemaError(f"unknown protected attribute {protected!r}") from None


def toggle_protected(X: np.ndarray, ds: Dataset, protected: str) -> np.ndarray:
    """Copy of X with every row's protected value swapped to the other group's modal value."""
    rule = _rule(ds, protected)
    X = np.array(X, dtype=float)
    priv = rule.is_privileged(X[:, rule.column])
    X[:, rule.column] = np.where(priv, rule.unprivileged_value, rule.privileged_value)
    return X


class MaskedModel(ProbaModel):
    """Overwrites the protected column with the mask model's guess, then predicts."""

    def __init__(self, model: Predictor, mask: Predictor | None, column: int, constant: float,
                 values: tuple[float, float]):
        self.model = model
        self.mask = mask
        self.column = column
        self.constant = constant
        self.values = values  # (unprivileged, privileged) encoded values
        self.n_features = model.n_features

    def masked(self, X) -> np.ndarray:
        X = np.array(as_matrix(X), dtype=float)
        if self.mask is None:
            X[:, self.column] = self.constant
        else:
            guess = self.mask.predict(np.delete(X, self.column, axis=1))
            X[:, self.column] = np.where(guess == 1, self.values[1], self.values[0])
        return X

    def predict_proba(self, X) -> np.ndarray:
        return self.model.predict_proba(self.masked(X))


def fairmask_train(
    train: Dataset, protected: str, cfg: ForestConfig, rng: np.random.Generator | None = None
) -> MitigatedPipeline:
    """Forest on the original data behind a tree that re-synthesises the protected value."""
    rule = _rule(train, protected)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    model = train_forest(train, cfg, rng)
    priv = train.group(protected)
    X = np.asarray(train.X, dtype=float)
    if priv.all() or (~priv).all():
        mask, constant = None, float(X[0, rule.column])
    else:
        others = Dataset(np.delete(X, rule.column, axis=1), priv.astype(int),
                         tuple(f for f in train.features if f != protected))
        tree_cfg = replace(cfg, max_features=others.n_features)
        mask, constant = train_tree(others, tree_cfg, rng), float("nan")
    masked = MaskedModel(model, mask, rule.column, constant,
                         (rule.unprivileged_value, rule.privileged_value))
    return MitigatedPipeline(masked, "mask", protected)


def situation_test(train: Dataset, protected: str, model: Predictor) -> np.ndarray:
    """Indices of rows whose prediction survives toggling the protected value."""
    X = np.asarray(train.X, dtype=float)
    same = model.predict(X) == model.predict(toggle_protected(X, train, protected))
    return np.flatnonzero(same)


def balance_subgroups(
    train: Dataset, protected: str, rng: np.random.Generator
) -> tuple[Dataset, list[str]]:
    """Oversample each (group × label) cell by duplication up to the largest cell."""
    priv = train.group(protected)
    y = np.asarray(train.y)
    cells = {(g, lab): np.flatnonzero((priv == g) & (y == lab)) for g in (False, True) for lab in (0, 1)}
    target = max(len(v) for v in cells.values())
    warnings, parts = [], []
    for (g, lab), idx in cells.items():
        if len(idx) == 0:
            warnings.append(f"empty subgroup privileged={g} label={lab}; not balanced")
            continue
        extra = rng.choice(idx, size=target - len(idx), replace=True) if target > len(idx) else idx[:0]
        parts.append(np.concatenate([idx, extra]))
    for w in warnings:
        log.warning(w)
    return train.subset(np.concatenate(parts)), warnings


def _need_both_groups(train: Dataset, protected: str) -> None:
    priv = train.group(protected)
    if priv.all() or (~priv).all():
        raise ValueError(f"both groups of {protected!r} must be present")


def fair_smote_train(
    train: Dataset,
    protected: str,
    cfg: ForestConfig,
    rng: np.random.Generator,
    provisional: Predictor | None = None,
) -> MitigatedPipeline:
    """Drop rows that fail situation testing, rebalance the four cells, retrain."""
    _need_both_groups(train, protected)
    provisional = provisional or train_forest(train, cfg, rng)
    kept = train.subset(situation_test(train, protected, provisional))
    balanced, warnings = balance_subgroups(kept, protected, rng)
    return MitigatedPipeline(train_forest(balanced, cfg, rng), "resample", protected, tuple(warnings))


class MeanEnsemble(ProbaModel):
    def __init__(self, *models: Predictor):
        self.models = models
        self.n_features = models[0].n_features

    def predict_proba(self, X) -> np.ndarray:
        X = as_matrix(X)
        return np.mean([m.predict_proba(X) for m in self.models], axis=0)


def maat_train(train: Dataset, protected: str, cfg: ForestConfig, rng: np.random.Generator) -> MitigatedPipeline:
    """Average a performance forest (original data) with a fairness forest (rebalanced data)."""
    _need_both_groups(train, protected)
    perf = train_forest(train, cfg, rng)
    balanced, warnings = balance_subgroups(train, protected, rng)
    fair = train_forest(balanced, cfg, rng)
    return MitigatedPipeline(MeanEnsemble(perf, fair), "ensemble", protected, tuple(warnings))
