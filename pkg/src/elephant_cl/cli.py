"""Command-line entry point: ``elephant-cl run`` and ``elephant-cl sweep``."""

import argparse
import copy
import csv
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from elephant_cl import config as cfgmod
from elephant_cl import tasks
from elephant_cl.activations import ActivationSpec, sparsity_estimate
from elephant_cl.ntk import write_profile_csv

log = logging.getLogger("elephant_cl")

# experiments whose final metric is an error (lower is better)
MINIMIZE = {"sine_stream", "edit", "ntk_profile"}


def _run_one(cfg, seed, out):
    """Execute one seed of ``cfg``; returns the final metric and writes per-run files."""
    out.mkdir(parents=True, exist_ok=True)
    stem = out / f"seed{seed}"
    kind = cfg.experiment
    if kind == "sine_stream":
        result = tasks.run_streaming_regression(cfg, seed)
    elif kind == "split_mnist":
        result = tasks.run_class_incremental(cfg, seed)
    elif kind == "ntk_profile":
        result = tasks.streaming_ntk_profiles(cfg, seed)
        for step, profile in sorted(result.extras["profiles"].items()):
            write_profile_csv(profile, out / f"seed{seed}_ntk_step{step}.csv")
    elif kind == "edit":
        res = tasks.run_edit_experiment(cfg, seed)
        with open(f"{stem}_edit.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "before", "after", "delta"])
            for x, b, a in zip(res.grid, res.before, res.after):
                w.writerow([repr(float(x)), repr(float(b)), repr(float(a)), repr(float(a - b))])
        summary = {k: getattr(res, k) for k in
                   ("inside_max", "outside_max", "steps", "converged", "pretrain_mse", "pretrain_epochs")}
        (out / f"seed{seed}_edit_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return res.outside_max
    elif kind == "sparsity_table":
        sc = cfg.sparsity
        with open(out / "sparsity.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["activation", "function_sparsity", "gradient_sparsity"])
            for k in sc.kinds:
                r = sparsity_estimate(ActivationSpec(k, sc.a, sc.d), sc.epsilon, sc.C, sc.grid_points)
                w.writerow([k, repr(r.function_sparsity), repr(r.gradient_sparsity)])
        return float("nan")
    else:
        raise cfgmod.ConfigError(f"unknown experiment {kind!r}")
    tasks.write_metrics_csv(result.records, f"{stem}_metrics.csv")
    return result.final_metric


def _seeds(cfg, n):
    if n is None:
        return list(cfg.seeds)
    return list(range(cfg.seeds[0], cfg.seeds[0] + n))


def run_config(cfg, out, n_seeds=None):
    """All seeds of one config: per-run files, aggregate CSV, and resolved config snapshot."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = _seeds(cfg, n_seeds)
    cfg.seeds = seeds
    cfgmod.dump(cfg, out / "config.resolved.yaml")
    finals = []
    for seed in seeds:
        log.info("%s seed %d -> %s", cfg.experiment, seed, out)
        try:
            finals.append(_run_one(cfg, seed, out))
        except tasks.DivergenceError as exc:
            tasks.write_metrics_csv(exc.records, out / f"seed{seed}_metrics.csv")
            log.warning("seed %d diverged at step %d", seed, exc.step)
            finals.append(float("nan"))
    if cfg.experiment != "sparsity_table":
        tasks.write_aggregate_csv([(cfg.config_id(), finals)], out / "aggregate.csv")
    return finals


def expand_grid(grid):
    """``{"a.b": [v1, v2], ...}`` -> list of override tuples, in sorted-key product order."""
    if not isinstance(grid, dict) or not grid:
        raise cfgmod.ConfigError("sweep grid must be a nonempty mapping of dotted keys to lists")
    keys = sorted(grid)
    values = []
    for k in keys:
        v = grid[k]
        values.append(v if isinstance(v, list) else [v])
    return [tuple(zip(keys, combo)) for combo in itertools.product(*values)]


def _sweep_point(args):
    raw, overrides, out, n_seeds = args
    logging.basicConfig(level=logging.WARNING)
    data = copy.deepcopy(raw)
    for k, v in overrides:
        cfgmod.set_path(data, k, v)
    cfg = cfgmod.from_dict(data)
    point_dir = Path(out) / cfg.config_id()
    finals = run_config(cfg, point_dir, n_seeds)
    return cfg.config_id(), overrides, finals


def sweep(config_path, grid_path, out, jobs=1, n_seeds=None):
    with open(config_path) as fh:
        raw = yaml.safe_load(fh) or {}
    with open(grid_path) as fh:
        grid = yaml.safe_load(fh)
    points = expand_grid(grid)
    base = cfgmod.from_dict(copy.deepcopy(raw))
    for ov in points:  # fail fast on bad grid keys before running anything
        data = copy.deepcopy(raw)
        for k, v in ov:
            cfgmod.set_path(data, k, v)
        cfgmod.from_dict(data)
    work = [(raw, ov, out, n_seeds) for ov in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, work))
    else:
        results = [_sweep_point(w) for w in work]
    out = Path(out)
    rows = [(cid, finals) for cid, _, finals in results]
    tasks.write_aggregate_csv(rows, out / "aggregate.csv")
    minimize = base.experiment in MINIMIZE
    best = None
    for cid, ov, finals in results:
        mean = float(np.mean(finals))
        if np.isnan(mean):
            continue
        if best is None or (mean < best[1] if minimize else mean > best[1]):
            best = (cid, mean, ov, finals)
    summary = {
        "experiment": base.experiment,
        "criterion": "min" if minimize else "max",
        "points": [{"config_id": cid, "overrides": dict(ov), "finals": finals} for cid, ov, finals in results],
        "best": None if best is None else {
            "config_id": best[0], "mean": best[1], "overrides": dict(best[2]), "finals": best[3]},
    }
    (out / "sweep_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def build_parser():
    p = argparse.ArgumentParser(prog="elephant-cl", description="Streaming and continual learning experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment for one or more seeds")
    r.add_argument("experiment", choices=cfgmod.EXPERIMENTS)
    r.add_argument("--config", help="YAML config file")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, e.g. --set optimizer.lr=1e-4 (repeatable)")
    r.add_argument("--out", help="output directory (default: <output_dir>/<experiment>/<config_id>)")
    r.add_argument("--seeds", type=int, help="number of consecutive seeds starting at the first configured seed")

    s = sub.add_parser("sweep", help="run every point of a hyperparameter grid")
    s.add_argument("--config", required=True)
    s.add_argument("--grid", required=True, help="YAML mapping of dotted keys to value lists")
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seeds", type=int)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            overrides = [("experiment", args.experiment)] + [cfgmod.parse_override(o) for o in args.overrides]
            cfg = cfgmod.load(args.config, overrides)
            out = args.out or Path(cfg.output_dir) / cfg.experiment / cfg.config_id()
            finals = run_config(cfg, out, args.seeds)
            if cfg.experiment != "sparsity_table":
                mean, se = tasks.mean_stderr(finals)
                print(f"{cfg.experiment} {cfg.config_id()}: mean={mean:.6g} stderr={se:.3g} n={len(finals)} -> {out}")
            else:
                print(f"sparsity table -> {Path(out) / 'sparsity.csv'}")
        else:
            summary = sweep(args.config, args.grid, args.out, args.jobs, args.seeds)
            best = summary["best"]
            if best:
                print(f"best {best['config_id']} ({summary['criterion']}) mean={best['mean']:.6g} {best['overrides']}")
            else:
                print("no sweep point finished")
    except (cfgmod.ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
