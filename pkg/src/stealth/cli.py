"""Command line entry point: ``stealth {run,rq1,rq2,rq3,cluster,synth}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .cluster import ClusterConfig, bicluster
from .data import Schema, encode_normalize, load_csv, synth_biased, write_csv
from .pipeline import (
    ConfigError,
    ExperimentConfig,
    compare,
    emit_report,
    jaccard_rows,
    load_dataset,
    run_experiment,
)


def _config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = ExperimentConfig.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.repeats is not None:
        changes["repeats"] = args.repeats
    if args.adversary:
        changes["adversary"] = True
    return cfg.with_(**changes) if changes else cfg


def cmd_run(args) -> int:
    cfg = _config(args)
    result = run_experiment(cfg, explain=True)
    wtl = compare(result) if len(cfg.methods) > 1 else None
    jacc = jaccard_rows(result) if "stealth" in cfg.methods else None
    emit_report(result.records, args.out, wtl, jacc)
    return 0


def cmd_rq1(args) -> int:
    cfg = _config(args).with_(adversary=True, methods=("baseline", "stealth"))
    result = run_experiment(cfg, explain=True)
    rows = jaccard_rows(result)
    emit_report(result.records, args.out, None, rows)
    for r in rows:
        print(f"{r.dataset}/{r.protected}: audit queries answered by biased model "
              f"{r.stealth_biased_rate:.3f}, explainer queries sent to decoy {r.explainer_innocuous_rate:.3f}")
    return 0


def _cmd_compare(args, methods) -> int:
    cfg = _config(args)
    if methods is not None:
        cfg = cfg.with_(methods=methods)
    result = run_experiment(cfg, explain=False)
    emit_report(result.records, args.out, compare(result), None)
    return 0


def cmd_rq2(args) -> int:
    return _cmd_compare(args, ("baseline", "stealth"))


def cmd_rq3(args) -> int:
    return _cmd_compare(args, None)


def cmd_cluster(args) -> int:
    if args.csv:
        if not args.schema:
            raise ConfigError("--csv needs --schema")
        schema = Schema.load(args.schema)
        ds = encode_normalize(load_csv(args.csv, schema), schema)
        cfg_cluster = ClusterConfig()
    else:
        cfg = _config(args)
        ds, _ = load_dataset(cfg.datasets[0])
        cfg_cluster = cfg.cluster
    seed = args.seed if args.seed is not None else cfg_cluster.seed
    tree = bicluster(ds.X, cfg_cluster, np.random.default_rng(seed))
    leaves = list(tree.leaves())
    if args.dump:
        print(tree.dump())
    print(f"rows={len(ds)} leaves={len(leaves)} largest_leaf={max(len(l.rows) for l in leaves)}")
    return 0


def cmd_synth(args) -> int:
    seed = args.seed if args.seed is not None else 0
    ds, schema = synth_biased(args.n, args.bias, args.noise, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(ds, schema, out / f"{args.name}.csv")
    schema.save(out / f"{args.name}.schema.json")
    print(f"wrote {out / (args.name + '.csv')} ({len(ds)} rows) and {out / (args.name + '.schema.json')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stealth", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default="results"):
        p.add_argument("--config", help="experiment config (JSON)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default=out_default)
        p.add_argument("--repeats", type=int)
        p.add_argument("--adversary", action="store_true", help="put the lying scaffold in front of MODEL1")

    for name, fn, hint in (
        ("run", cmd_run, "full experiment from a config"),
        ("rq1", cmd_rq1, "explanation overlap with and without the liar"),
        ("rq2", cmd_rq2, "surrogate vs baseline win/tie/loss"),
        ("rq3", cmd_rq3, "all configured methods vs baseline"),
    ):
        p = sub.add_parser(name, help=hint)
        common(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("cluster", help="build and inspect the cluster tree")
    common(p)
    p.add_argument("--csv")
    p.add_argument("--schema")
    p.add_argument("--dump", action="store_true", help="print the tree as indented text")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("synth", help="write a synthetic biased CSV and its schema")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--bias", type=float, default=0.8)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int)
    p.add_argument("--name", default="synth")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        print(f"stealth: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
