"""Recursive random-projection bi-clustering and per-leaf sampling.

Each split picks two distant pivots (east, west), places every row on the
line between them by the cosine rule, and cuts at the median position.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np


@dataclass(frozen=True)
class ProjectionLine:
    east: np.ndarray
    west: np.ndarray
    c: float


@dataclass(frozen=True)
class ClusterConfig:
    stop_size: int | None = None  # None -> ceil(sqrt(rows clustered))
    samples_per_leaf: int = 1
    sampling: str = "random"  # "random" | "centroid"
    seed: int = 0

    def __post_init__(self):
        if self.stop_size is not None and self.stop_size < 1:
            raise ValueError("stop_size must be >= 1")
        if self.samples_per_leaf < 1:
            raise ValueError("samples_per_leaf must be >= 1")
        if self.sampling not in ("random", "centroid"):
            raise ValueError(f"unknown leaf sampling {self.sampling!r}")

    def threshold(self, n_rows: int) -> int:
        return self.stop_size if self.stop_size is not None else max(1, math.ceil(math.sqrt(n_rows)))


@dataclass(frozen=True)
class ClusterNode:
    rows: np.ndarray
    line: ProjectionLine | None = None
    cut: float | None = None
    children: tuple["ClusterNode", ...] = field(default=())

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def leaves(self) -> Iterator["ClusterNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                yield node
            else:
                stack.extend(reversed(node.children))

    def dump(self, indent: int = 0) -> str:
        pad = "|  " * indent
        if self.is_leaf:
            lines = [f"{pad}leaf n={len(self.rows)}"]
        else:
            lines = [f"{pad}split n={len(self.rows)} cut={self.cut:.6g} c={self.line.c:.6g}"]
            lines += [child.dump(indent + 1) for child in self.children]
        return "\n".join(lines)


def distance(u: np.ndarray, v: np.ndarray) -> float:
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return float(np.sqrt(np.sum((u - v) ** 2)))


def _dists(X: np.ndarray, p: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum((X - p) ** 2, axis=1))


def pick_pivots(X: np.ndarray, rng: np.random.Generator, start: int | None = None) -> ProjectionLine | None:
    """Random row -> farthest row (east) -> row farthest from east (west).

    Returns None when every row is identical (no projection axis exists).
    """
    z = X[rng.integers(len(X)) if start is None else start]
    east = X[int(np.argmax(_dists(X, z)))]
    d_east = _dists(X, east)
    w = int(np.argmax(d_east))
    c = float(d_east[w])
    if c == 0.0:
        return None
    return ProjectionLine(east, X[w], c)


def project(p: np.ndarray, line: ProjectionLine) -> np.ndarray | float:
    """Position of ``p`` (a row or a matrix of rows) along east->west: (a² + c² - b²) / 2c."""
    if line.c <= 0:
        raise ValueError("projection line needs distinct pivots")
    p = np.asarray(p, dtype=float)
    if p.ndim == 1:
        a, b = distance(p, line.east), distance(p, line.west)
    else:
        a, b = _dists(p, line.east), _dists(p, line.west)
    return (a**2 + line.c**2 - b**2) / (2 * line.c)


def bicluster(X: np.ndarray, cfg: ClusterConfig, rng: np.random.Generator) -> ClusterNode:
    """Split rows at the median projection until clusters hold <= t rows."""
    X = np.asarray(X, dtype=float)
    if len(X) < 1:
        raise ValueError("nothing to cluster")
    t = cfg.threshold(len(X))

    def grow(rows: np.ndarray) -> ClusterNode:
        if len(rows) <= t:
            return ClusterNode(rows)
        sub = X[rows]
        line = pick_pivots(sub, rng)
        if line is None:
            return ClusterNode(rows)
        x = project(sub, line)
        order = np.argsort(x, kind="stable")
        half = (len(rows) + 1) // 2
        left, right = np.sort(rows[order[:half]]), np.sort(rows[order[half:]])
        cut = float(x[order[half - 1]])
        return ClusterNode(rows, line, cut, (grow(left), grow(right)))

    return grow(np.arange(len(X)))


def sample_leaves(
    tree: ClusterNode,
    m: int,
    rng: np.random.Generator,
    X: np.ndarray | None = None,
    how: str = "random",
) -> np.ndarray:
    """Pick min(m, |leaf|) rows per leaf, in leaf order.

    ``how="centroid"`` takes the rows nearest the leaf centroid instead of a
    uniform draw and needs ``X``.
    """
    picked = []
    for leaf in tree.leaves():
        k = min(m, len(leaf.rows))
        if how == "centroid":
            if X is None:
                raise ValueError("centroid sampling needs the row matrix")
            sub = X[leaf.rows]
            near = np.argsort(_dists(sub, sub.mean(axis=0)), kind="stable")[:k]
            picked.append(leaf.rows[near])
        else:
            picked.append(rng.choice(leaf.rows, size=k, replace=False))
    return np.concatenate(picked).astype(int)
