"""Performance and group-fairness scores from predictions and protected-group tags.

Undefined values (0/0, or a zero denominator in disparate impact) are
``None`` and print as ``n/a``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

PERFORMANCE = ("accuracy", "recall", "precision", "f1", "false_alarm")
FAIRNESS = ("aod", "eod", "spd", "di")
METRICS = PERFORMANCE + FAIRNESS

# metric -> True when larger raw values are better. Fairness metrics are
# compared by distance from parity (|AOD|, |EOD|, |SPD|, |log DI|), smaller better.
LARGER_BETTER = {
    "accuracy": True,
    "recall": True,
    "precision": True,
    "f1": True,
    "false_alarm": False,
    "aod": False,
    "eod": False,
    "spd": False,
    "di": False,
}

_DI_CLIP = 1e-3


def comparable(metric: str, value: float) -> float:
    """Map a raw score onto the scale used by statistical comparisons."""
    if metric not in LARGER_BETTER:
        raise KeyError(f"no direction registered for metric {metric!r}")
    if metric in ("aod", "eod", "spd"):
        return abs(value)
    if metric == "di":
        return abs(math.log(min(max(value, _DI_CLIP), 1 / _DI_CLIP)))
    return value


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class GroupConfusion:
    overall: Confusion
    privileged: Confusion
    unprivileged: Confusion


@dataclass(frozen=True)
class MetricReport:
    accuracy: float | None
    recall: float | None
    precision: float | None
    f1: float | None
    false_alarm: float | None
    aod: float | None
    eod: float | None
    spd: float | None
    di: float | None

    def as_dict(self) -> dict[str, float | None]:
        return asdict(self)

    @staticmethod
    def columns() -> tuple[str, ...]:
        return tuple(f.name for f in fields(MetricReport))


def _div(num: float, den: float) -> float | None:
    return None if den == 0 else num / den


def _tally(pred: np.ndarray, truth: np.ndarray) -> Confusion:
    return Confusion(
        tp=int(((pred == 1) & (truth == 1)).sum()),
        tn=int(((pred == 0) & (truth == 0)).sum()),
        fp=int(((pred == 1) & (truth == 0)).sum()),
        fn=int(((pred == 0) & (truth == 1)).sum()),
    )


def confusion(pred, truth, privileged) -> GroupConfusion:
    pred, truth = np.asarray(pred).astype(int), np.asarray(truth).astype(int)
    privileged = np.asarray(privileged, dtype=bool)
    if not len(pred) == len(truth) == len(privileged):
        raise ValueError("pred, truth and group tags must have equal lengths")
    if len(pred) == 0:
        raise ValueError("nothing to score")
    return GroupConfusion(
        _tally(pred, truth),
        _tally(pred[privileged], truth[privileged]),
        _tally(pred[~privileged], truth[~privileged]),
    )


def performance(c: GroupConfusion) -> dict[str, float | None]:
    o = c.overall
    if o.total == 0:
        raise ValueError("empty confusion matrix")
    precision = _div(o.tp, o.tp + o.fp)
    recall = _div(o.tp, o.tp + o.fn)
    if precision is None or recall is None:
        f1 = None
    else:
        f1 = _div(2 * precision * recall, precision + recall)
    return {
        "accuracy": (o.tp + o.tn) / o.total,
        "recall": recall,
        "precision": precision,
        "f1": f1,
        "false_alarm": _div(o.fp, o.fp + o.tn),
    }


def _diff(a: float | None, b: float | None) -> float | None:
    return None if a is None or b is None else a - b


def fairness(c: GroupConfusion) -> dict[str, float | None]:
    """AOD, EOD, SPD and DI of the unprivileged group relative to the privileged one."""
    u, p = c.unprivileged, c.privileged
    if u.total == 0 or p.total == 0:
        return dict.fromkeys(FAIRNESS)
    tpr_u, tpr_p = _div(u.tp, u.tp + u.fn), _div(p.tp, p.tp + p.fn)
    fpr_u, fpr_p = _div(u.fp, u.fp + u.tn), _div(p.fp, p.fp + p.tn)
    eod = _diff(tpr_u, tpr_p)
    fpr_gap = _diff(fpr_u, fpr_p)
    aod = None if eod is None or fpr_gap is None else (fpr_gap + eod) / 2
    pos_u = (u.tp + u.fp) / u.total
    pos_p = (p.tp + p.fp) / p.total
    return {"aod": aod, "eod": eod, "spd": pos_u - pos_p, "di": _div(pos_u, pos_p)}


def score(pred, truth, privileged) -> MetricReport:
    c = confusion(pred, truth, privileged)
    return MetricReport(**performance(c), **fairness(c))


def fmt(value: float | None) -> str:
    return "n/a" if value is None else repr(float(value))
