"""Tabular data: schema, CSV loading, encoding, splitting and a synthetic generator."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np


class SchemaError(ValueError):
    pass


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str = "numeric"  # "numeric" | "categorical"


@dataclass(frozen=True)
class Protected:
    """A protected attribute and its privileged-group predicate.

    A raw value is privileged when it appears in ``privileged`` or, for
    numeric attributes, when ``threshold`` is set and value >= threshold.
    Every other value is unprivileged, so the predicate is total.
    """

    name: str
    privileged: tuple[Any, ...] = ()
    threshold: float | None = None

    def is_privileged(self, raw: Any) -> bool:
        if self.threshold is not None:
            return float(raw) >= self.threshold
        return any(_same_value(raw, p) for p in self.privileged)


@dataclass(frozen=True)
class Schema:
    features: tuple[Feature, ...]
    class_name: str
    favorable: Any
    protected: tuple[Protected, ...] = ()

    def __post_init__(self):
        names = [f.name for f in self.features]
        if not names:
            raise SchemaError("schema needs at least one feature")
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names")
        if self.class_name in names:
            raise SchemaError(f"class column {self.class_name!r} listed as a feature")
        for f in self.features:
            if f.kind not in ("numeric", "categorical"):
                raise SchemaError(f"feature {f.name!r}: unknown kind {f.kind!r}")
        for p in self.protected:
            if p.name not in names:
                raise SchemaError(f"protected attribute {p.name!r} is not a feature")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def protected_attr(self, name: str) -> Protected:
        for p in self.protected:
            if p.name == name:
                return p
        raise SchemaError(f"unknown protected attribute {name!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "Schema":
        try:
            features = tuple(Feature(f["name"], f.get("kind", "numeric")) for f in doc["features"])
            klass = doc["class"]
            protected = tuple(
                Protected(p["name"], tuple(p.get("privileged", ())), p.get("threshold"))
                for p in doc.get("protected", ())
            )
            return cls(features, klass["name"], klass["favorable"], protected)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc

    def to_dict(self) -> dict:
        prot = []
        for p in self.protected:
            entry: dict[str, Any] = {"name": p.name, "privileged": list(p.privileged)}
            if p.threshold is not None:
                entry["threshold"] = p.threshold
            prot.append(entry)
        return {
            "features": [{"name": f.name, "kind": f.kind} for f in self.features],
            "class": {"name": self.class_name, "favorable": self.favorable},
            "protected": prot,
        }

    @classmethod
    def load(cls, path: str | Path) -> "Schema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def _same_value(raw: Any, ref: Any) -> bool:
    if str(raw).strip() == str(ref).strip():
        return True
    try:
        return float(raw) == float(ref)
    except (TypeError, ValueError):
        return False


@dataclass(frozen=True)
class GroupRule:
    """Maps (possibly perturbed) encoded values of a protected column to a group.

    ``values`` are the distinct encoded values observed at encoding time and
    ``flags`` whether each is privileged. An arbitrary value takes the group
    of its nearest observed value.
    """

    column: int
    values: np.ndarray
    flags: np.ndarray
    privileged_value: float
    unprivileged_value: float

    def is_privileged(self, col: np.ndarray | float) -> np.ndarray:
        col = np.asarray(col, dtype=float)
        pos = np.clip(np.searchsorted(self.values, col), 1, max(len(self.values) - 1, 1))
        if len(self.values) == 1:
            return np.full(col.shape, bool(self.flags[0]))
        lo, hi = self.values[pos - 1], self.values[pos]
        nearest = np.where(np.abs(col - lo) <= np.abs(hi - col), pos - 1, pos)
        return self.flags[nearest].astype(bool)

    def representative(self, privileged: bool) -> float:
        return self.privileged_value if privileged else self.unprivileged_value


@dataclass(frozen=True)
class Dataset:
    """Rectangular rows with optional binary labels and protected-group tags.

    Before ``encode_normalize`` the matrix is an object array of raw cells;
    afterwards it is float64 in [0, 1] and ``rules`` holds one GroupRule per
    protected attribute.
    """

    X: np.ndarray
    y: np.ndarray | None
    features: tuple[str, ...]
    privileged: dict[str, np.ndarray] = field(default_factory=dict)
    rules: dict[str, GroupRule] = field(default_factory=dict)

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != len(self.features):
            raise ValueError("X must be 2-D with one column per feature")
        if self.y is not None:
            if len(self.y) != len(self.X):
                raise ValueError("label vector length differs from row count")
            if len(self.y) and not np.isin(self.y, (0, 1)).all():
                raise ValueError("labels must be 0/1")
        for arr in (self.X, self.y, *self.privileged.values()):
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.X)

    @property
    def n_features(self) -> int:
        return len(self.features)

    def column(self, name: str) -> int:
        try:
            return self.features.index(name)
        except ValueError:
            raise SchemaError(f"unknown feature {name!r}") from None

    def subset(self, idx: Sequence[int] | np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return replace(
            self,
            X=self.X[idx],
            y=None if self.y is None else self.y[idx],
            privileged={k: v[idx] for k, v in self.privileged.items()},
        )

    def with_labels(self, y: np.ndarray | None) -> "Dataset":
        return replace(self, X=self.X.copy(), y=None if y is None else np.asarray(y, dtype=int))

    def without_labels(self) -> "Dataset":
        return self.with_labels(None)

    def group(self, protected: str) -> np.ndarray:
        try:
            return self.privileged[protected]
        except KeyError:
            raise SchemaError(f"unknown protected attribute {protected!r}") from None


@dataclass(frozen=True)
class TriSplit:
    train1: Dataset
    train2: Dataset
    test: Dataset
    seed: int


def load_csv(path: str | Path, schema: Schema) -> Dataset:
    """Parse a CSV file against ``schema``; rows with any empty cell are dropped."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        wanted = [*schema.feature_names, schema.class_name]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        pos = [header.index(c) for c in wanted]
        kinds = [f.kind for f in schema.features]
        rows: list[list[Any]] = []
        labels: list[str] = []
        for raw in reader:
            line = reader.line_num
            if not raw:
                continue
            if len(raw) != len(header):
                raise ParseError(f"{path}:{line}: expected {len(header)} cells, got {len(raw)}")
            cells = [raw[p].strip() for p in pos]
            if any(c == "" for c in cells):
                continue
            row: list[Any] = []
            for cell, kind, name in zip(cells, kinds, schema.feature_names):
                if kind == "numeric":
                    try:
                        row.append(float(cell))
                    except ValueError:
                        raise ParseError(
                            f"{path}:{line}: non-numeric value {cell!r} in {name!r}"
                        ) from None
                else:
                    row.append(cell)
            rows.append(row)
            labels.append(cells[-1])

    distinct = sorted(set(labels))
    if len(distinct) > 2:
        raise SchemaError(f"{path}: class column has {len(distinct)} distinct values, expected 2")
    y = np.array([1 if _same_value(v, schema.favorable) else 0 for v in labels], dtype=int)
    X = np.empty((len(rows), len(kinds)), dtype=object)
    for i, row in enumerate(rows):
        X[i, :] = row
    privileged = {
        p.name: np.array(
            [p.is_privileged(v) for v in X[:, schema.feature_names.index(p.name)]], dtype=bool
        )
        for p in schema.protected
    }
    return Dataset(X, y, schema.feature_names, privileged)


def _code_categories(col: np.ndarray) -> np.ndarray:
    codes: dict[Any, int] = {}
    return np.array([codes.setdefault(v, len(codes)) for v in col], dtype=float)


def encode_normalize(ds: Dataset, schema: Schema) -> Dataset:
    """Ordinal-code categoricals by first appearance, then min-max every column to [0, 1]."""
    n, F = ds.X.shape
    out = np.zeros((n, F), dtype=float)
    for j, feat in enumerate(schema.features):
        col = ds.X[:, j]
        col = _code_categories(col) if feat.kind == "categorical" else col.astype(float)
        if n:
            lo, hi = col.min(), col.max()
            if hi > lo:
                out[:, j] = (col - lo) / (hi - lo)
    rules = {}
    for p in schema.protected:
        j = ds.column(p.name)
        flags = ds.privileged[p.name]
        values, first = np.unique(out[:, j], return_index=True)
        rule_flags = flags[first]
        # a value shared by both groups cannot arise: the predicate is a function of the raw value
        rules[p.name] = GroupRule(
            column=j,
            values=values,
            flags=rule_flags,
            privileged_value=_modal(out[flags, j]),
            unprivileged_value=_modal(out[~flags, j]),
        )
    return Dataset(out, ds.y, ds.features, dict(ds.privileged), rules)


def _modal(col: np.ndarray) -> float:
    if len(col) == 0:
        return math.nan
    vals, counts = np.unique(col, return_counts=True)
    return float(vals[np.argmax(counts)])


def tri_split(ds: Dataset, seed: int) -> TriSplit:
    """Shuffle, cut 40:40:20 and strip the labels of the middle part."""
    n = len(ds)
    if n < 5:
        raise ValueError(f"need at least 5 rows to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    a = round(0.4 * n)
    b = a + round(0.4 * n)
    return TriSplit(
        ds.subset(order[:a]),
        ds.subset(order[a:b]).without_labels(),
        ds.subset(order[b:]),
        seed,
    )


def synth_biased(
    n: int, bias_strength: float, noise: float, seed: int
) -> tuple[Dataset, Schema]:
    """Generate a biased binary-classification table.

    Columns: ``pa`` (protected, 1 = privileged, 50/50), ``legit`` (uniform,
    drives the fair label ``legit >= 0.5``), four binary nuisance columns
    and two continuous nuisance columns. An unprivileged row is forced to the
    unfavorable label with probability ``bias_strength``; each label is then
    flipped with probability ``noise``.
    """
    if n < 50:
        raise ValueError("synth_biased needs n >= 50")
    rng = np.random.default_rng(seed)
    pa = rng.integers(0, 2, n).astype(float)
    legit = rng.random(n)
    bin_a = rng.integers(0, 2, n).astype(float)
    bin_b = (rng.random(n) < 0.3).astype(float)
    bin_c = (rng.random(n) < 0.6).astype(float)
    bin_d = rng.integers(0, 2, n).astype(float)
    cont_a = rng.random(n)
    cont_b = rng.beta(2.0, 5.0, n)
    y = (legit >= 0.5).astype(int)
    forced = (pa == 0) & (rng.random(n) < bias_strength)
    y[forced] = 0
    flip = rng.random(n) < noise
    y[flip] = 1 - y[flip]

    names = ("pa", "legit", "bin_a", "bin_b", "bin_c", "bin_d", "cont_a", "cont_b")
    schema = Schema(
        tuple(Feature(nm) for nm in names),
        "label",
        1,
        (Protected("pa", (1,)),),
    )
    raw = np.column_stack([pa, legit, bin_a, bin_b, bin_c, bin_d, cont_a, cont_b]).astype(object)
    ds = Dataset(raw, y, names, {"pa": pa == 1})
    return encode_normalize(ds, schema), schema


def write_csv(ds: Dataset, schema: Schema, path: str | Path) -> None:
    """Write an encoded dataset back out as CSV (class column last)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.features, schema.class_name])
        for i in range(len(ds)):
            label = "" if ds.y is None else int(ds.y[i])
            w.writerow([repr(float(v)) for v in ds.X[i]] + [label])
