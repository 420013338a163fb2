import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

import utils
from bco import BcoLimits
from data_utils import IngestError, ground_truth_path, load_ground_truth, load_problem
from ibco import run_ibco
from models import least_squares_fit, post_step_for, report_model
from problem import calibrate_margin, consensus
from ransac import RansacConfig, random_init, run_ransac
from synthetic import UndefinedMetricError, e_ls

logger = logging.getLogger(__name__)

METHODS = ("ransac", "ibco", "ransac+ibco")
INITS = ("random", "lsq")


@dataclass
class RunRecord:
    method: str
    seed: int
    n: int
    consensus: int
    runtime: float
    e_ls: float = None
    stages: list = field(default_factory=list)
    x: list = None
    model: dict = None
    traces: dict = field(default_factory=dict)
    solver_failed: bool = False

    def __post_init__(self):
        if not 0 <= self.consensus <= self.n:
            raise ValueError("consensus {} outside [0, {}]".format(self.consensus, self.n))
        if self.runtime < 0:
            raise ValueError("negative runtime")

    def to_dict(self):
        return dict(self.__dict__)


def check_method(method):
    if method not in METHODS:
        raise ValueError("unknown method '{}', expected one of {}".format(method, ", ".join(METHODS)))


def ransac_config(hps, seed):
    section = hps.get("ransac") if hps is not None else None
    kwargs = dict(section.items()) if section is not None else {}
    kwargs["seed"] = seed
    return RansacConfig(**kwargs)


def bco_limits(hps):
    if hps is None:
        return BcoLimits()
    return BcoLimits.from_hparams(hps.get("bco"), hps.get("solver"))


def initial_estimate(problem, init, seed):
    if init == "lsq":
        x = least_squares_fit(problem.family, problem.data)
        if x is not None:
            return x
        logger.warning("least-squares initialization failed, falling back to a random start")
    elif init != "random":
        raise ValueError("unknown init '{}', expected one of {}".format(init, ", ".join(INITS)))
    return random_init(problem.instance, problem.family, problem.data, seed)


def consensus_set_error(problem, estimate, gt):
    if gt is None:
        return None
    x_ls = least_squares_fit(problem.family, problem.subset(estimate.inlier_mask))
    if x_ls is None:
        return None
    try:
        return e_ls(x_ls, gt, problem.instance)
    except UndefinedMetricError as err:
        logger.warning("e_ls undefined: %s", err)
        return None


def run_method(problem, method, seed=0, hps=None, x0=None, init="random", gt=None):
    """Run one method end to end; runtime covers the method calls only."""
    check_method(method)
    inst = problem.instance
    limits = bco_limits(hps)
    stages = []
    traces = {}
    bisection = None
    solver_failed = False
    runtime = 0.

    if method in ("ransac", "ransac+ibco"):
        start = time.perf_counter()
        result = run_ransac(inst, problem.family, problem.data, ransac_config(hps, seed))
        elapsed = time.perf_counter() - start
        runtime += elapsed
        best = result.estimate
        stages.append({"stage": "ransac", "consensus": best.consensus, "runtime": elapsed,
                       "iterations": result.iterations, "degenerate": result.degenerate})
        x_start = best.x
    elif x0 is not None:
        x_start = np.asarray(x0, dtype=np.float64)
        stages.append({"stage": "init", "source": "x0"})
    else:
        x_start = initial_estimate(problem, init, seed)
        stages.append({"stage": "init", "source": init})

    if method in ("ibco", "ransac+ibco"):
        inst = calibrate_margin(inst, x_start)
        start_est = consensus(inst, x_start)
        stages[-1]["consensus"] = start_est.consensus
        start = time.perf_counter()
        best, bisection = run_ibco(inst, x_start, post_step_for(problem.family), limits)
        elapsed = time.perf_counter() - start
        runtime += elapsed
        stages.append({"stage": "ibco", "consensus": best.consensus, "runtime": elapsed,
                       "bisection_steps": len(bisection.steps)})
        traces["ibco"] = [s.to_dict() for s in bisection.steps]
        solver_failed = bisection.solver_failed
        if solver_failed:
            logger.warning("the cone solver did not reach optimality in every step; "
                           "the result keeps the best verified estimate")

    logger.info("%s: consensus %d of %d in %.3fs", method, best.consensus, inst.size, runtime)
    record = RunRecord(method, int(seed), inst.size, best.consensus, runtime,
                       e_ls=consensus_set_error(problem, best, gt), stages=stages,
                       x=np.asarray(best.x).tolist(), model=report_model(problem, best.x),
                       traces=traces, solver_failed=solver_failed)
    return record, bisection


def load_hparams(args):
    if args.config:
        hps = utils.get_hparams_from_file(args.config)
    else:
        hps = utils.HParams()
    utils.override(hps, "solver", "tol", args.tol)
    utils.override(hps, "solver", "max_iters", args.max_iters)
    return hps


def main(args):
    out_dir = args.out or os.path.join(os.path.dirname(os.path.abspath(args.input)), "fit")
    logger = utils.get_logger(out_dir, "fit.log")
    try:
        check_method(args.method)
        hps = load_hparams(args)
        problem = load_problem(args.input, epsilon=args.epsilon)
        x0 = utils.parse_float_list(args.x0)
        gt_path = args.gt or ground_truth_path(args.input)
        gt = load_ground_truth(gt_path) if os.path.isfile(gt_path) else None
    except (OSError, IngestError, ValueError) as err:
        logger.error("%s", err)
        return 1
    hps.fit = utils.HParams(input=args.input, method=args.method, seed=args.seed,
                            epsilon=problem.instance.epsilon, x0=x0, init=args.init)
    utils.save_hparams(hps, out_dir)
    utils.check_git_hash(out_dir)
    logger.info(hps)

    try:
        record, trace = run_method(problem, args.method, args.seed, hps, x0, args.init, gt)
    except ValueError as err:
        logger.error("%s", err)
        return 1

    if args.tensorboard and trace is not None:
        writer = utils.get_summary_writer(args.tensorboard)
        utils.write_traces(writer, trace)
        writer.close()
    if record.solver_failed:
        logger.warning("solver failure flagged in the run record")

    doc = record.to_dict()
    with open(os.path.join(out_dir, "record.json"), "w") as f:
        json.dump(doc, f, indent=2)
    json.dump(doc, sys.stdout)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument('-i', '--input', type=str, required=True, help='Instance JSON file')
    parser.add_argument('-m', '--method', type=str, default='ransac+ibco', help='|'.join(METHODS))
    parser.add_argument('-s', '--seed', type=int, default=0)
    utils.add_config_argument(parser, None)
    parser.add_argument('--epsilon', type=float, default=None, help='Override the stored threshold')
    parser.add_argument('--tol', type=float, default=None, help='Cone solver tolerance')
    parser.add_argument('--max-iters', type=int, default=None, help='Cone solver iteration cap')
    parser.add_argument('--out', type=str, default=None, help='Output directory')
    parser.add_argument('--x0', type=str, default=None, help='Comma-separated initial parameters for ibco')
    parser.add_argument('--init', type=str, default='random', help='|'.join(INITS))
    parser.add_argument('--gt', type=str, default=None, help='Ground-truth file (default: <instance>.gt.json)')
    parser.add_argument('--tensorboard', type=str, default=None, help='Directory for convergence traces')
    args = parser.parse_args()
    sys.exit(main(args))
