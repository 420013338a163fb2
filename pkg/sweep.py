"""Run every method over an outlier-rate sweep and write plot-ready tables.

Outputs in the sweep directory:
  summary.csv   one row per (eta, method), columns in SUMMARY_COLUMNS
  runs.jsonl    one record per (eta, run, method)
  config.json   the effective configuration
"""
import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np
from tqdm import tqdm

import commons
import utils
from fit import METHODS, run_method
from models import FAMILY_TAGS
from synthetic import generate_problem, make_config

SUMMARY_COLUMNS = ("eta", "method", "runs", "failures", "consensus_mean", "consensus_std",
                   "runtime_mean", "e_ls_mean", "rel_diff_mean")


@dataclass
class ExperimentConfig:
    family: str
    methods: list = field(default_factory=lambda: list(METHODS))
    etas: list = field(default_factory=lambda: [float(e) for e in range(0, 80, 5)])
    runs: int = 10
    seed: int = 0
    out_dir: str = "./logs/sweep"

    def __post_init__(self):
        if self.family not in FAMILY_TAGS:
            raise ValueError("unknown model family '{}'".format(self.family))
        if self.runs < 1:
            raise ValueError("runs must be at least 1, got {}".format(self.runs))
        if not self.etas:
            raise ValueError("the eta sweep is empty")
        for eta in self.etas:
            if not 0 <= eta <= 100:
                raise ValueError("eta must lie in [0, 100], got {}".format(eta))
        for method in self.methods:
            if method not in METHODS:
                raise ValueError("unknown method '{}'".format(method))

    @classmethod
    def from_hparams(cls, hps):
        section = hps.sweep.to_dict() if "sweep" in hps else {}
        return cls(family=hps.data.family, **section)

    def tasks(self, hps):
        seeds = commons.spawn_seeds(self.seed, len(self.etas) * self.runs)
        data = hps.data.to_dict()
        out = []
        for k, eta in enumerate(self.etas):
            for r in range(self.runs):
                out.append({"eta": eta, "run": r, "seed": seeds[k * self.runs + r],
                            "family": self.family, "methods": list(self.methods),
                            "data": data, "hps": hps.to_dict()})
        return out


def run_task(task):
    """Generate one instance and run every method on it; failures are recorded, not raised."""
    settings = dict(task["data"])
    settings.update(eta=task["eta"], seed=task["seed"])
    settings.pop("family", None)
    base = {"eta": task["eta"], "run": task["run"], "seed": task["seed"]}
    hps = utils.HParams(**task["hps"])
    try:
        problem, gt = generate_problem(task["family"], make_config(task["family"], **settings))
    except Exception as err:
        return [dict(base, method=m, error="generate: {}".format(err)) for m in task["methods"]]

    rows = []
    for method in task["methods"]:
        try:
            record, _ = run_method(problem, method, task["seed"], hps, gt=gt)
        except Exception as err:
            rows.append(dict(base, method=method, error="{}: {}".format(type(err).__name__, err)))
            continue
        rows.append(dict(base, method=method, n=record.n, consensus=record.consensus,
                         runtime=record.runtime, e_ls=record.e_ls,
                         solver_failed=record.solver_failed, stages=record.stages))
    return rows


def _mean(values):
    return float(np.mean(values)) if values else float("nan")


def summarize_runs(runs, etas, methods):
    """Aggregate raw run rows into one summary row per (eta, method)."""
    reference = {(r["eta"], r["run"]): r["consensus"] for r in runs
                 if r["method"] == "ransac" and "error" not in r}
    table = []
    for eta in etas:
        for method in methods:
            rows = [r for r in runs if r["eta"] == eta and r["method"] == method]
            ok = [r for r in rows if "error" not in r]
            consensus = [r["consensus"] for r in ok]
            e_ls = [r["e_ls"] for r in ok if r.get("e_ls") is not None]
            rel = [(r["consensus"] - reference[(eta, r["run"])]) / reference[(eta, r["run"])]
                   for r in ok if reference.get((eta, r["run"]))]
            table.append({
                "eta": eta,
                "method": method,
                "runs": len(rows),
                "failures": len(rows) - len(ok),
                "consensus_mean": _mean(consensus),
                "consensus_std": float(np.std(consensus)) if consensus else float("nan"),
                "runtime_mean": _mean([r["runtime"] for r in ok]),
                "e_ls_mean": _mean(e_ls),
                "rel_diff_mean": _mean(rel),
            })
    return table


def write_summary(path, table):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for row in table:
            writer.writerow(row)


def run_sweep(exp, hps, workers=1, progress=True):
    tasks = exp.tasks(hps)
    if workers > 1:
        with Pool(workers) as p:
            rets = list(tqdm(p.imap(run_task, tasks), total=len(tasks), disable=not progress))
    else:
        rets = [run_task(t) for t in tqdm(tasks, disable=not progress)]
    runs = [row for rows in rets for row in rows]
    return runs, summarize_runs(runs, exp.etas, exp.methods)


def main(args):
    try:
        hps = utils.get_hparams_from_file(args.config)
        utils.override(hps, "sweep", "seed", args.seed)
        utils.override(hps, "sweep", "out_dir", args.out)
        utils.override(hps, "sweep", "runs", args.runs)
        utils.override(hps, "sweep", "etas", utils.parse_float_list(args.etas))
        if args.method:
            utils.override(hps, "sweep", "methods", args.method.split(","))
        utils.override(hps, "data", "epsilon", args.epsilon)
        utils.override(hps, "solver", "tol", args.tol)
        utils.override(hps, "solver", "max_iters", args.max_iters)
        exp = ExperimentConfig.from_hparams(hps)
        workers = utils.num_workers()
    except (OSError, ValueError, TypeError, AttributeError) as err:
        print("error: {}".format(err), file=sys.stderr)
        return 1

    logger = utils.get_logger(exp.out_dir, "sweep.log")
    utils.save_hparams(hps, exp.out_dir)
    utils.check_git_hash(exp.out_dir)
    logger.info(hps)
    logger.info("%d settings x %d runs on %d workers", len(exp.etas), exp.runs, workers)

    runs, table = run_sweep(exp, hps, workers)
    with open(os.path.join(exp.out_dir, "runs.jsonl"), "w") as f:
        for row in runs:
            f.write(json.dumps(row) + "\n")
    write_summary(os.path.join(exp.out_dir, "summary.csv"), table)

    failures = sum(row["failures"] for row in table)
    if failures:
        logger.warning("%d of %d runs failed, see runs.jsonl", failures, len(runs))
    for row in table:
        logger.info("eta %g %s: consensus %.2f +- %.2f, %.3fs", row["eta"], row["method"],
                    row["consensus_mean"], row["consensus_std"], row["runtime_mean"])
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    utils.add_config_argument(parser, "./configs/regression.json")
    parser.add_argument('-s', '--seed', type=int, default=None)
    parser.add_argument('-m', '--method', type=str, default=None, help='Comma-separated methods')
    parser.add_argument('--etas', type=str, default=None, help='Comma-separated outlier percentages')
    parser.add_argument('--runs', type=int, default=None)
    parser.add_argument('--epsilon', type=float, default=None)
    parser.add_argument('--tol', type=float, default=None)
    parser.add_argument('--max-iters', type=int, default=None)
    parser.add_argument('--out', type=str, default=None, help='Output directory')
    args = parser.parse_args()
    sys.exit(main(args))
