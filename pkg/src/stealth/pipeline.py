"""Experiment runner: split, query, build surrogates, score, explain, compare."""
from __future__ import annotations

import csv
import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .adversary import PerturbConfig, Scaffold, build_scaffold
from .cluster import ClusterConfig, bicluster, sample_leaves
from .data import Dataset, Schema, encode_normalize, load_csv, synth_biased, tri_split
from .explain import ExplainConfig, InfluenceSet, influential_set, jaccard
from .learners import CountingOracle, ForestConfig, Predictor, train_forest
from .metrics import METRICS, MetricReport, fmt, score
from .mitigation import fair_smote_train, fairmask_train, maat_train
from .stats import WTLTable, win_tie_loss

log = logging.getLogger(__name__)

METHODS = ("baseline", "stealth", "maat", "fair_smote", "fairmask")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    csv: str | None = None
    schema: str | None = None
    synthetic: dict | None = None
    protected: tuple[str, ...] | None = None  # None -> every protected attribute in the schema
    legit_feature: str | None = None  # decoy feature for the scaffold; None -> auto

    def __post_init__(self):
        if (self.synthetic is None) == (self.csv is None):
            raise ConfigError(f"dataset {self.name!r}: give exactly one of csv/schema or synthetic")
        if self.csv is not None and self.schema is None:
            raise ConfigError(f"dataset {self.name!r}: csv needs a schema")


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple[DatasetSpec, ...]
    repeats: int = 20
    seed: int = 0
    methods: tuple[str, ...] = ("baseline", "stealth")
    adversary: bool = False
    cluster: ClusterConfig = ClusterConfig()
    forest: ForestConfig = ForestConfig()
    explain: ExplainConfig = ExplainConfig()
    perturb: PerturbConfig = PerturbConfig()

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if not self.methods:
            raise ConfigError("at least one method is required")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown method(s) {sorted(unknown)}; choose from {METHODS}")
        if not self.datasets:
            raise ConfigError("at least one dataset is required")

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str | Path = ".") -> "ExperimentConfig":
        base_dir = Path(base_dir)
        doc = dict(doc)
        try:
            specs = []
            for d in doc.pop("datasets"):
                d = dict(d)
                for key in ("csv", "schema"):
                    if d.get(key) is not None:
                        d[key] = str(base_dir / d[key])
                if d.get("protected") is not None:
                    d["protected"] = tuple(d["protected"])
                specs.append(DatasetSpec(**d))
            sub = {
                "cluster": ClusterConfig,
                "forest": ForestConfig,
                "explain": ExplainConfig,
                "perturb": PerturbConfig,
            }
            kwargs: dict[str, Any] = {k: typ(**doc.pop(k)) for k, typ in sub.items() if k in doc}
            if "methods" in doc:
                kwargs["methods"] = tuple(doc.pop("methods"))
            kwargs.update(doc)
            return cls(datasets=tuple(specs), **kwargs)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad experiment config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), path.parent)

    def with_(self, **changes) -> "ExperimentConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ExperimentConfig(**d)


def load_dataset(spec: DatasetSpec) -> tuple[Dataset, Schema]:
    if spec.synthetic is not None:
        return synth_biased(**spec.synthetic)
    schema = Schema.load(spec.schema)
    return encode_normalize(load_csv(spec.csv, schema), schema), schema


@dataclass(frozen=True)
class RunRecord:
    dataset: str
    protected: str
    repeat: int
    method: str
    report: MetricReport | None
    queries: int
    seconds: float
    influential: frozenset[str] | None = None
    error: str | None = None

    CSV_HEADER = ("dataset", "protected", "repeat", "method", *METRICS, "queries", "influential", "error")

    def csv_row(self) -> list[str]:
        scores = self.report.as_dict() if self.report else dict.fromkeys(METRICS)
        infl = "" if self.influential is None else ";".join(sorted(self.influential))
        return [
            self.dataset, self.protected, str(self.repeat), self.method,
            *(fmt(scores[m]) for m in METRICS),
            str(self.queries), infl, self.error or "",
        ]


@dataclass
class RepeatResult:
    records: list[RunRecord] = field(default_factory=list)
    base_jacc: float | None = None
    slack_jacc: float | None = None
    leaves: int = 0
    stealth_biased_rate: float | None = None  # share of the audit's queries answered by the biased model
    explainer_innocuous_rate: float | None = None  # share of explainer queries sent to the decoy
    detector_accuracy: float | None = None


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in key])


# purpose tags for per-repeat RNG streams
_SPLIT, _MODEL1, _CLUSTER, _MODEL2, _EXPLAIN, _SCAFFOLD, _MITIGATE, _MODEL2_HONEST = range(8)


@dataclass
class Surrogate:
    model: Predictor
    queries: int
    leaves: int
    labels: np.ndarray
    rows: np.ndarray


def build_surrogate(
    train2: Dataset, black_box: Predictor, cfg: ExperimentConfig, rng: np.random.Generator
) -> Surrogate:
    """Cluster the unlabeled rows, query the black box once per sampled row, fit a forest."""
    X = np.asarray(train2.X, dtype=float)
    tree = bicluster(X, cfg.cluster, rng)
    picks = sample_leaves(tree, cfg.cluster.samples_per_leaf, rng, X, cfg.cluster.sampling)
    leaves = sum(1 for _ in tree.leaves())
    budget = sum(min(cfg.cluster.samples_per_leaf, len(leaf.rows)) for leaf in tree.leaves())
    oracle = CountingOracle(black_box)
    labels = oracle.predict(X[picks])
    if oracle.queries != budget or len(picks) != budget:
        raise AssertionError(f"query budget {budget} but {oracle.queries} queries issued")
    sample = Dataset(X[picks], labels, train2.features)
    return Surrogate(train_forest(sample, cfg.forest, rng), oracle.queries, leaves, labels, picks)


def run_repeat(
    ds: Dataset,
    spec: DatasetSpec,
    protected: str,
    cfg: ExperimentConfig,
    run_index: int,
    repeat: int,
    explain: bool = True,
) -> RepeatResult:
    """One repeat for one (dataset, protected attribute) run, all configured methods."""
    key = (cfg.seed, run_index, repeat)
    res = RepeatResult()

    def record(method, model, queries, seconds, infl=None):
        pred = model.predict(np.asarray(split.test.X, dtype=float))
        rep = score(pred, split.test.y, split.test.group(protected))
        names = None if infl is None else infl.features
        res.records.append(RunRecord(spec.name, protected, repeat, method, rep, queries, seconds, names))

    split = tri_split(ds, int(_rng(*key, _SPLIT).integers(2**31)))
    X2 = np.asarray(split.train2.X, dtype=float)
    std = np.where(np.ptp(X2, axis=0) > 0, X2.std(axis=0), 0.0)

    def infl_of(model, tag):
        if not explain:
            return None
        return influential_set(model, split.test, cfg.explain, _rng(*key, _EXPLAIN, tag), std)

    t0 = time.perf_counter()
    model1 = train_forest(split.train1, cfg.forest, _rng(*key, _MODEL1))
    t_model1 = time.perf_counter() - t0
    infl1 = infl_of(model1, 1) if {"baseline", "stealth"} & set(cfg.methods) else None
    if "baseline" in cfg.methods:
        record("baseline", model1, 0, t_model1, infl1)

    if "stealth" in cfg.methods:
        t0 = time.perf_counter()
        honest = build_surrogate(split.train2, model1, cfg, _rng(*key, _MODEL2_HONEST))
        infl2 = infl_of(honest.model, 2)
        if infl1 is not None:
            res.base_jacc = jaccard(infl2, infl1)
        res.leaves = honest.leaves
        if cfg.adversary:
            scaffold = build_scaffold(
                split.train1, protected, spec.legit_feature, cfg.perturb, cfg.forest, _rng(*key, _SCAFFOLD)
            )
            res.detector_accuracy = scaffold.ood_detector.holdout_accuracy
            scaffold.reset_counters()
            lied_to = build_surrogate(split.train2, scaffold, cfg, _rng(*key, _MODEL2))
            res.stealth_biased_rate = scaffold.routed_biased / max(lied_to.queries, 1)
            infl_adv = infl_of(lied_to.model, 3)
            scaffold.reset_counters()
            infl_liar = infl_of(scaffold, 4)
            if infl_liar is not None:
                total = scaffold.routed_biased + scaffold.routed_innocuous
                res.explainer_innocuous_rate = scaffold.routed_innocuous / total
                res.slack_jacc = jaccard(infl_adv, infl_liar)
            surrogate, infl_s = lied_to, infl_adv
        else:
            # no liar: both overlaps are taken against the same honest model
            res.slack_jacc = res.base_jacc
            surrogate, infl_s = honest, infl2
        record("stealth", surrogate.model, surrogate.queries, time.perf_counter() - t0, infl_s)

    trainers = {"maat": maat_train, "fair_smote": fair_smote_train, "fairmask": fairmask_train}
    for i, method in enumerate(m for m in METHODS if m in trainers and m in cfg.methods):
        t0 = time.perf_counter()
        pipe = trainers[method](split.train1, protected, cfg.forest, _rng(*key, _MITIGATE, i))
        record(method, pipe, 0, time.perf_counter() - t0)
    return res


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[RunRecord]
    repeats: dict[tuple[str, str], list[RepeatResult]]

    def runs(self) -> list[tuple[str, str]]:
        return list(self.repeats)


def iter_runs(cfg: ExperimentConfig) -> Iterable[tuple[int, DatasetSpec, Dataset, str]]:
    idx = 0
    for spec in cfg.datasets:
        ds, schema = load_dataset(spec)
        attrs = spec.protected or tuple(p.name for p in schema.protected)
        if not attrs:
            raise ConfigError(f"dataset {spec.name!r} declares no protected attribute")
        for attr in attrs:
            schema.protected_attr(attr)
            yield idx, spec, ds, attr
            idx += 1


def run_experiment(cfg: ExperimentConfig, explain: bool = True) -> ExperimentResult:
    records: list[RunRecord] = []
    repeats: dict[tuple[str, str], list[RepeatResult]] = {}
    for run_index, spec, ds, attr in iter_runs(cfg):
        bucket = repeats.setdefault((spec.name, attr), [])
        for r in range(cfg.repeats):
            try:
                res = run_repeat(ds, spec, attr, cfg, run_index, r, explain)
            except Exception as exc:  # a failed repeat is reported, not fatal
                log.exception("repeat %d of %s/%s failed", r, spec.name, attr)
                res = RepeatResult([RunRecord(spec.name, attr, r, "*", None, 0, 0.0, None,
                                              f"{type(exc).__name__}: {exc}")])
            bucket.append(res)
            records.extend(res.records)
    return ExperimentResult(cfg, records, repeats)


def run_stealth(ds: Dataset, spec: DatasetSpec, protected: str, cfg: ExperimentConfig,
                repeat: int = 0, run_index: int = 0) -> RepeatResult:
    """Steps 0-7 for the baseline and the surrogate only."""
    return run_repeat(ds, spec, protected, cfg.with_(methods=("baseline", "stealth")), run_index, repeat)


def _median(values: list[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    return statistics.median(vals) if vals else None


@dataclass(frozen=True)
class JaccardRow:
    dataset: str
    protected: str
    slack_jacc: float | None
    base_jacc: float | None
    stealth_biased_rate: float | None = None
    explainer_innocuous_rate: float | None = None


def jaccard_rows(result: ExperimentResult) -> list[JaccardRow]:
    rows = []
    for (name, attr), reps in result.repeats.items():
        rows.append(JaccardRow(
            name, attr,
            _median([r.slack_jacc for r in reps]),
            _median([r.base_jacc for r in reps]),
            _median([r.stealth_biased_rate for r in reps]),
            _median([r.explainer_innocuous_rate for r in reps]),
        ))
    return rows


def run_rq1(cfg: ExperimentConfig) -> tuple[ExperimentResult, list[JaccardRow]]:
    """Jaccard of surrogate explanations against the liar's and the honest model's."""
    result = run_experiment(cfg.with_(methods=("baseline", "stealth")))
    return result, jaccard_rows(result)


def compare(result: ExperimentResult, rng: np.random.Generator | None = None) -> WTLTable:
    """Win/tie/loss of every non-baseline method against the baseline, per run and metric."""
    rng = rng if rng is not None else _rng(result.config.seed, 7919)
    table = WTLTable()
    methods = [m for m in METHODS if m in result.config.methods and m != "baseline"]
    if "baseline" not in result.config.methods or not methods:
        table.note = "nothing to compare: need the baseline and at least one other method"
        return table
    by_cell: dict[tuple, list[float]] = {}
    for rec in result.records:
        if rec.report is None:
            continue
        for metric, value in rec.report.as_dict().items():
            if value is not None:
                by_cell.setdefault((rec.dataset, rec.protected, rec.method, metric), []).append(value)
    for name, attr in result.runs():
        for method in methods:
            for metric in METRICS:
                mine = by_cell.get((name, attr, method, metric), [])
                base = by_cell.get((name, attr, "baseline", metric), [])
                if len(mine) < 2 or len(base) < 2:
                    table.excluded.append((f"{name}/{attr}", method, metric))
                    continue
                table.add(method, metric, win_tie_loss(mine, base, metric, rng))
    return table


def run_rq2_rq3(cfg: ExperimentConfig) -> tuple[ExperimentResult, WTLTable]:
    result = run_experiment(cfg, explain=False)
    return result, compare(result)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def jaccard_table(rows: list[JaccardRow]) -> list[list[str]]:
    """Rows sorted by Base_Jacc with a median marker row spliced into the middle."""
    def key(r):
        return (r.base_jacc is None, r.base_jacc or 0.0, r.dataset, r.protected)

    ordered = sorted(rows, key=key)
    out = [[r.dataset, r.protected, fmt(r.slack_jacc), fmt(r.base_jacc)] for r in ordered]
    med = _median([r.base_jacc for r in rows])
    if med is not None:
        out.insert(len(out) // 2, ["median", "", "", fmt(med)])
    return out


def emit_report(
    records: list[RunRecord],
    out_dir: str | Path,
    wtl: WTLTable | None = None,
    jaccard: list[JaccardRow] | None = None,
    echo: bool = True,
) -> list[Path]:
    """Write runs.csv, timings.csv and, when given, wtl.csv/wtl.txt and jaccard.csv."""
    if not records:
        raise ValueError("no records to report")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    try:
        _write_csv(out / "runs.csv", RunRecord.CSV_HEADER, [r.csv_row() for r in records])
        written.append(out / "runs.csv")
        # wall-clock lives apart from runs.csv so reruns stay byte-identical
        _write_csv(out / "timings.csv", ("dataset", "protected", "repeat", "method", "seconds"),
                   [[r.dataset, r.protected, r.repeat, r.method, f"{r.seconds:.4f}"] for r in records])
        written.append(out / "timings.csv")
        if wtl is not None:
            wtl.to_csv(out / "wtl.csv")
            (out / "wtl.txt").write_text(wtl.to_text(), encoding="utf-8")
            written += [out / "wtl.csv", out / "wtl.txt"]
        if jaccard is not None:
            _write_csv(out / "jaccard.csv", ("dataset", "protected", "slack_jacc", "base_jacc"),
                       jaccard_table(jaccard))
            written.append(out / "jaccard.csv")
    except OSError as exc:
        raise OSError(f"cannot write report into {out}: {exc}") from exc
    if echo:
        print(summary(records, wtl, jaccard))
    return written


def summary(records: list[RunRecord], wtl: WTLTable | None = None,
            jaccard: list[JaccardRow] | None = None) -> str:
    lines = []
    groups: dict[tuple[str, str, str], list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.dataset, r.protected, r.method), []).append(r)
    lines.append(f"{'dataset':<12} {'protected':<10} {'method':<11} {'acc':>6} {'f1':>6} {'spd':>7} {'queries':>7}")
    for (d, p, m), recs in groups.items():
        ok = [r for r in recs if r.report]
        acc = _median([r.report.accuracy for r in ok])
        f1 = _median([r.report.f1 for r in ok])
        spd = _median([r.report.spd for r in ok])
        q = _median([r.queries for r in ok])
        fails = len(recs) - len(ok)
        lines.append(
            f"{d:<12} {p:<10} {m:<11} {_f(acc):>6} {_f(f1):>6} {_f(spd):>7} {_f(q, 0):>7}"
            + (f"  ({fails} failed)" if fails else "")
        )
    if jaccard:
        lines.append("")
        for j in jaccard:
            lines.append(f"{j.dataset}/{j.protected}: Slack_Jacc={_f(j.slack_jacc)} Base_Jacc={_f(j.base_jacc)}")
    if wtl is not None:
        lines.append("")
        lines.append(wtl.note or wtl.to_text().rstrip())
        if wtl.excluded:
            lines.append(f"{len(wtl.excluded)} cell(s) excluded for undefined scores")
    return "\n".join(lines)


def _f(v, digits: int = 3) -> str:
    return "n/a" if v is None else f"{v:.{digits}f}"


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)
