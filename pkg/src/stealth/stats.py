"""Nonparametric comparison of repeated scores.

Cliff's delta for effect size, a pooled bootstrap for significance,
Scott-Knott clustering of treatments, and win/tie/loss tallies against a
baseline.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .metrics import FAIRNESS, LARGER_BETTER, PERFORMANCE, comparable

SMALL_EFFECT = 0.147


def cliffs_delta(a: Sequence[float], b: Sequence[float]) -> float:
    """(#{a > b} - #{a < b}) / (|a| |b|), counted with two binary searches per a."""
    a = np.asarray(a, dtype=float)
    b = np.sort(np.asarray(b, dtype=float))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("cliffs_delta needs two non-empty samples")
    less = np.searchsorted(b, a, side="left").sum()  # pairs with b < a
    more = (len(b) - np.searchsorted(b, a, side="right")).sum()  # pairs with b > a
    return float(less - more) / (len(a) * len(b))


def bootstrap_diff(
    a: Sequence[float],
    b: Sequence[float],
    resamples: int = 1000,
    alpha: float = 0.05,
    rng: np.random.Generator | None = None,
) -> bool:
    """Is |mean(a) - mean(b)| beyond the (1 - alpha) quantile of the pooled-bootstrap null?"""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("bootstrap_diff needs two non-empty samples")
    rng = rng if rng is not None else np.random.default_rng(0)
    observed = abs(a.mean() - b.mean())
    pool = np.concatenate([a, b])
    ra = pool[rng.integers(0, len(pool), (resamples, len(a)))].mean(axis=1)
    rb = pool[rng.integers(0, len(pool), (resamples, len(b)))].mean(axis=1)
    return bool(observed > np.quantile(np.abs(ra - rb), 1 - alpha))


def same(a, b, rng: np.random.Generator | None = None) -> bool:
    """Negligible effect size, or a difference the bootstrap cannot confirm."""
    if abs(cliffs_delta(a, b)) < SMALL_EFFECT:
        return True
    return not bootstrap_diff(a, b, rng=rng)


def scott_knott(
    groups: Mapping[str, Sequence[float]],
    larger_better: bool = True,
    rng: np.random.Generator | None = None,
) -> dict[str, int]:
    """Rank treatments; rank 0 is the best cluster under the given direction."""
    if not groups:
        raise ValueError("scott_knott needs at least one group")
    rng = rng if rng is not None else np.random.default_rng(0)
    names = sorted(groups, key=lambda k: (np.median(groups[k]), k), reverse=larger_better)
    vals = [np.asarray(groups[k], dtype=float) for k in names]
    clusters: list[list[int]] = []

    def split(lo: int, hi: int) -> None:
        if hi - lo > 1:
            allv = np.concatenate(vals[lo:hi])
            mu, best, cut = allv.mean(), -1.0, None
            for i in range(lo + 1, hi):
                left, right = np.concatenate(vals[lo:i]), np.concatenate(vals[i:hi])
                ss = len(left) * (left.mean() - mu) ** 2 + len(right) * (right.mean() - mu) ** 2
                if ss > best:
                    best, cut = ss, i
            left, right = np.concatenate(vals[lo:cut]), np.concatenate(vals[cut:hi])
            if not same(left, right, rng):
                split(lo, cut)
                split(cut, hi)
                return
        clusters.append(list(range(lo, hi)))

    split(0, len(names))
    return {names[i]: rank for rank, members in enumerate(clusters) for i in members}


def win_tie_loss(
    method: Sequence[float],
    baseline: Sequence[float],
    metric: str,
    rng: np.random.Generator | None = None,
) -> str:
    """"win", "tie" or "loss" for ``method`` against ``baseline`` on ``metric``."""
    if metric not in LARGER_BETTER:
        raise KeyError(f"no direction registered for metric {metric!r}")
    m = np.array([comparable(metric, v) for v in method])
    b = np.array([comparable(metric, v) for v in baseline])
    if same(m, b, rng):
        return "tie"
    gap = np.median(m) - np.median(b)
    if gap == 0:
        return "tie"
    better = gap > 0 if LARGER_BETTER[metric] else gap < 0
    return "win" if better else "loss"


PANELS = {"performance": PERFORMANCE, "fairness": FAIRNESS}


@dataclass
class WTLTable:
    """Per-method win/loss/tie counts for the performance and fairness panels."""

    counts: dict[str, dict[str, dict[str, int]]] = field(default_factory=dict)
    excluded: list[tuple[str, str, str]] = field(default_factory=list)  # (run, method, metric)
    note: str | None = None

    def add(self, method: str, metric: str, outcome: str) -> None:
        panel = "performance" if metric in PERFORMANCE else "fairness"
        cell = self.counts.setdefault(method, {p: {"win": 0, "loss": 0, "tie": 0} for p in PANELS})
        cell[panel][outcome] += 1

    def cells(self, method: str, panel: str) -> int:
        return sum(self.counts[method][panel].values())

    def rows(self) -> list[list]:
        out = []
        for method, panels in self.counts.items():
            row = [method]
            for p in PANELS:
                c = panels[p]
                row += [c["win"], c["loss"], c["tie"], c["win"] + c["tie"], self.cells(method, p)]
            out.append(row)
        return out

    HEADER = [
        "method",
        "perf_wins", "perf_losses", "perf_ties", "perf_wins_ties", "perf_cells",
        "fair_wins", "fair_losses", "fair_ties", "fair_wins_ties", "fair_cells",
    ]

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        w.writerows(self.rows())
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def to_text(self) -> str:
        head = ["Method", "Wins", "Loses", "Ties", "Wins + Ties", "Wins", "Loses", "Ties", "Wins + Ties"]
        body = []
        for r in self.rows():
            body.append([r[0], r[1], r[2], r[3], f"{r[4]} / {r[5]}", r[6], r[7], r[8], f"{r[9]} / {r[10]}"])
        table = [head] + [[str(c) for c in row] for row in body]
        widths = [max(len(row[i]) for row in table) for i in range(len(head))]
        lines = ["Performance: accuracy, recall, precision, F1, false alarm | Fairness: AOD, EOD, SPD, DI"]
        for row in table:
            perf = "  ".join(c.rjust(widths[i + 1]) for i, c in enumerate(row[1:5]))
            fair = "  ".join(c.rjust(widths[i + 5]) for i, c in enumerate(row[5:9]))
            lines.append(f"{row[0].ljust(widths[0])} | {perf} | {fair}")
        return "\n".join(lines) + "\n"
