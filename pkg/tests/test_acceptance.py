"""The twelve acceptance criteria, one test each.

Every test records a ``criterion N: PASS|FAIL ...`` line (printed in the
terminal summary) before asserting, so a failing criterion still reports
the numbers it saw.
"""
import json
import math
import os
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import VERDICTS
from stealth.cli import main
from stealth.cluster import ClusterConfig, ProjectionLine, bicluster, pick_pivots, project
from stealth.data import Dataset, synth_biased
from stealth.explain import jaccard
from stealth.learners import ForestConfig, train_forest
from stealth.metrics import Confusion, GroupConfusion, fairness, performance, score
from stealth.mitigation import balance_subgroups, fair_smote_train, fairmask_train, maat_train
from stealth.pipeline import DatasetSpec, ExperimentConfig, _rng, build_surrogate, run_experiment, run_rq1, run_stealth
from stealth.stats import bootstrap_diff, cliffs_delta, win_tie_loss


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


def test_1_projection():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        X = rng.random((int(rng.integers(2, 40)), int(rng.integers(1, 12))))
        line = pick_pivots(X, rng)
        worst = max(worst, abs(project(line.east, line)), abs(project(line.west, line) - line.c))
    line = ProjectionLine(np.array([0.0, 0.0]), np.array([5.0, 0.0]), 5.0)
    x345 = float(project(np.array([3.2, 2.4]), line))
    verdict(1, worst <= 1e-9 and abs(x345 - 3.2) <= 1e-9, f"max endpoint error {worst:.2e}, 3-4-5 -> {x345:.12g}")


def test_2_clustering_and_budget():
    X = np.random.default_rng(0).random((10_000, 6))
    tree = bicluster(X, ClusterConfig(stop_size=100), np.random.default_rng(1))
    leaves = list(tree.leaves())
    rows = np.sort(np.concatenate([l.rows for l in leaves]))
    partition = np.array_equal(rows, np.arange(10_000))
    biggest = max(len(l.rows) for l in leaves)

    y = (X[:, 0] > 0.5).astype(int)
    names = tuple(f"f{i}" for i in range(6))
    cfg = ExperimentConfig(datasets=(DatasetSpec("x", synthetic={}),), cluster=ClusterConfig(stop_size=100),
                           forest=ForestConfig(n_trees=5))
    black_box = train_forest(Dataset(X[:500], y[:500], names), cfg.forest)
    s = build_surrogate(Dataset(X, None, names), black_box, cfg, _rng(2))
    ok = partition and biggest <= 100 and len(leaves) == 128 and s.queries == s.leaves == 128
    verdict(2, ok, f"partition={partition} largest={biggest} leaves={len(leaves)} queries={s.queries}")


def test_3_jaccard():
    got = (jaccard({"a", "b"}, {"a", "b"}), jaccard({"a"}, {"b"}), jaccard({"a", "b", "c"}, {"b", "c", "d"}))
    verdict(3, got == (1.0, 0.0, 0.5), f"identity/disjoint/overlap -> {got}")


def test_4_metrics():
    c = Confusion(25, 25, 25, 25)
    perf = performance(GroupConfusion(c, c, c))
    sym = all(v == 0.5 for v in perf.values())
    half = Confusion(10, 7, 3, 5)
    fair = fairness(GroupConfusion(half + half, half, half))
    parity = fair == {"aod": 0.0, "eod": 0.0, "spd": 0.0, "di": 1.0}
    rng = np.random.default_rng(0)
    bad = 0
    for _ in range(1000):
        n = int(rng.integers(2, 100))
        pred, truth, priv = rng.integers(0, 2, n), rng.integers(0, 2, n), rng.random(n) < 0.5
        a, b = score(pred, truth, priv), score(pred, truth, ~priv)
        for k in ("aod", "eod", "spd"):
            x, y = getattr(a, k), getattr(b, k)
            if (x is None) != (y is None) or (x is not None and abs(x + y) > 1e-12):
                bad += 1
        if a.di and b.di is not None and abs(b.di - 1 / a.di) > 1e-12:
            bad += 1
    verdict(4, sym and parity and bad == 0, f"symmetric={sym} parity={parity} swap violations={bad}/1000")


def test_5_statistics():
    rng = np.random.default_rng(0)
    mismatch = 0
    for _ in range(1000):
        a = rng.integers(0, 12, rng.integers(1, 30))
        b = rng.integers(0, 12, rng.integers(1, 30))
        slow = (sum(x > y for x in a for y in b) - sum(x < y for x in a for y in b)) / (len(a) * len(b))
        mismatch += abs(cliffs_delta(a, b) - slow) > 1e-12
    t0 = time.perf_counter()
    fp = sum(bootstrap_diff(rng.normal(size=20), rng.normal(size=20), rng=rng) for _ in range(1000)) / 1000
    ties = all(win_tie_loss(x, x, "accuracy") == "tie" for x in (rng.random(int(rng.integers(1, 30))) for _ in range(200)))
    secs = time.perf_counter() - t0
    ok = mismatch == 0 and abs(fp - 0.05) <= 0.02 and ties and secs < 120
    verdict(5, ok, f"delta mismatches={mismatch} bootstrap false-positive rate={fp:.3f} self-ties={ties} ({secs:.1f}s)")


@pytest.fixture(scope="module")
def rq1():
    cfg = ExperimentConfig(
        datasets=(DatasetSpec("synth", synthetic={"n": 2000, "bias_strength": 0.9, "noise": 0.05, "seed": 0},
                              protected=("pa",)),),
        repeats=20, adversary=True,
    )
    t0 = time.perf_counter()
    result, rows = run_rq1(cfg)
    return result, rows[0], time.perf_counter() - t0


def test_6_rq1_desk_scale(rq1):
    result, row, secs = rq1
    ok = row.slack_jacc is not None and row.slack_jacc <= 0.2 and row.base_jacc >= 0.5 and secs < 300
    verdict(6, ok, f"median Slack_Jacc={row.slack_jacc:.3f} Base_Jacc={row.base_jacc:.3f} over 20 repeats ({secs:.0f}s)")


def test_7_evasion_routing(rq1):
    result, row, _ = rq1
    reps = result.repeats[("synth", "pa")]
    audit = [r.stealth_biased_rate for r in reps]
    probe = [r.explainer_innocuous_rate for r in reps]
    spec = result.config.datasets[0]
    ds, _ = synth_biased(**spec.synthetic)
    t0 = time.perf_counter()
    run_stealth(ds, spec, "pa", result.config, repeat=0)
    secs = time.perf_counter() - t0
    ok = min(audit) >= 0.9 and min(probe) >= 0.9 and secs < 120
    verdict(7, ok, f"audit->biased min={min(audit):.3f} median={statistics.median(audit):.3f}; "
                   f"explainer->decoy min={min(probe):.3f} median={statistics.median(probe):.3f}; one run {secs:.1f}s")


def accuracy_gap(spec):
    cfg = ExperimentConfig(datasets=(spec,), repeats=20, methods=("baseline", "stealth"))
    result = run_experiment(cfg, explain=False)
    acc = {m: [r.report.accuracy for r in result.records if r.method == m] for m in ("baseline", "stealth")}
    return statistics.median(acc["stealth"]) - statistics.median(acc["baseline"])


def test_8_surrogate_accuracy_synthetic():
    t0 = time.perf_counter()
    spec = DatasetSpec("synth", synthetic={"n": 2000, "bias_strength": 0.9, "noise": 0.05, "seed": 0},
                       protected=("pa",))
    gap = accuracy_gap(spec)
    secs = time.perf_counter() - t0
    verdict(8, abs(gap) <= 0.10 and secs < 300, f"synthetic: median accuracy surrogate - baseline = {gap:+.3f} ({secs:.0f}s)")


@pytest.mark.skipif(not os.environ.get("STEALTH_PUBLIC_CSV"), reason="set STEALTH_PUBLIC_CSV and STEALTH_PUBLIC_SCHEMA")
def test_8_surrogate_accuracy_public_csv():
    spec = DatasetSpec("public", csv=os.environ["STEALTH_PUBLIC_CSV"], schema=os.environ["STEALTH_PUBLIC_SCHEMA"])
    cfg = ExperimentConfig(datasets=(spec,), repeats=20, methods=("baseline", "stealth"))
    gaps = []
    for (_, attr), reps in run_experiment(cfg, explain=False).repeats.items():
        recs = [r for rep in reps for r in rep.records]
        med = {m: statistics.median(r.report.accuracy for r in recs if r.method == m) for m in ("baseline", "stealth")}
        gaps.append(med["stealth"] - med["baseline"])
    worst = max(gaps, key=abs)
    verdict(8, abs(worst) <= 0.10, f"{Path(spec.csv).name}: worst median accuracy gap {worst:+.3f}")


def test_9_wtl_denominators():
    specs = tuple(
        DatasetSpec(f"d{i}", synthetic={"n": 1000, "bias_strength": 0.9, "noise": 0.05, "seed": i}, protected=("pa",))
        for i in range(12)
    )
    cfg = ExperimentConfig(datasets=specs, repeats=3, methods=("baseline", "stealth"), forest=ForestConfig(n_trees=20))
    from stealth.pipeline import compare

    table = compare(run_experiment(cfg, explain=False))
    perf, fair = table.cells("stealth", "performance"), table.cells("stealth", "fairness")
    verdict(9, (perf, fair) == (60, 48) and not table.excluded,
            f"12 runs -> {perf} performance / {fair} fairness cells, {len(table.excluded)} excluded")


def test_10_mitigation_invariants():
    ds, _ = synth_biased(800, 0.9, 0.05, 0)
    cfg = ForestConfig(n_trees=20, seed=0)
    j = ds.column("pa")
    probe = np.random.default_rng(1).random((500, ds.n_features))
    lo, hi = probe.copy(), probe.copy()
    lo[:, j], hi[:, j] = 0.0, 1.0
    mask = fairmask_train(ds, "pa", cfg, np.random.default_rng(0))
    invariant = np.array_equal(mask.predict_proba(lo), mask.predict_proba(hi))

    out, _ = balance_subgroups(ds, "pa", np.random.default_rng(2))
    priv, y = out.group("pa"), out.y
    counts = {int(((priv == g) & (y == lab)).sum()) for g in (False, True) for lab in (0, 1)}
    fair_smote_train(ds, "pa", cfg, np.random.default_rng(3))

    maat = maat_train(ds, "pa", cfg, np.random.default_rng(4))
    a, b = maat.model.models
    mean_ok = np.array_equal(maat.predict_proba(probe), (a.predict_proba(probe) + b.predict_proba(probe)) / 2)
    verdict(10, invariant and len(counts) == 1 and mean_ok,
            f"fairmask toggle-invariant={invariant} balanced cell sizes={sorted(counts)} maat mean={mean_ok}")


def test_11_cli_determinism(tmp_path):
    doc = {
        "datasets": [{"name": "synth", "synthetic": {"n": 1000, "bias_strength": 0.9, "noise": 0.05, "seed": 0},
                      "protected": ["pa"]}],
        "repeats": 3,
        "methods": ["baseline", "stealth", "maat", "fair_smote", "fairmask"],
        "adversary": True,
    }
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps(doc))
    t0 = time.perf_counter()
    codes = [main(["run", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path / d)]) for d in ("a", "b")]
    secs = time.perf_counter() - t0
    names = ("runs.csv", "wtl.csv", "wtl.txt", "jaccard.csv")
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names)
    verdict(11, codes == [0, 0] and same and secs < 300, f"exit codes {codes}, identical {names}: {same} ({secs:.0f}s)")


def test_12_runtime_envelope():
    ds, _ = synth_biased(1000, 0.9, 0.05, 0)
    spec = DatasetSpec("synth", synthetic={}, protected=("pa",))
    cfg = ExperimentConfig(datasets=(spec,), adversary=True)
    t0 = time.perf_counter()
    res = run_stealth(ds, spec, "pa", cfg)
    secs = time.perf_counter() - t0
    ok = secs <= 60 and res.slack_jacc is not None
    verdict(12, ok, f"full pipeline with scaffold and explanations on 1000 rows: {secs:.1f}s")
