import argparse
import csv
import json
import os

import numpy as np
import pytest

import fit
import generate
import ingest_check
import socp
import sweep
import utils
from data_utils import ground_truth_path, load_problem, save_problem
from ibco import run_ibco
from models import make_problem
from synthetic import RegressionGenConfig, generate_problem


def fit_args(path, **kwargs):
  args = dict(input=path, method="ibco", seed=0, config=None, epsilon=None, tol=None,
              max_iters=None, out=None, x0=None, init="random", gt=None, tensorboard=None)
  args.update(kwargs)
  return argparse.Namespace(**args)


@pytest.fixture
def toy_file(tmp_path):
  problem = make_problem("regression", np.array([[1., 0.], [1., 0.1], [1., 5.]]), 0.3)
  path = str(tmp_path / "toy.json")
  save_problem(path, problem)
  return path


@pytest.fixture
def regression_config(tmp_path):
  hps = utils.get_hparams_from_file(os.path.join(os.path.dirname(__file__), "..", "configs",
                                                 "regression.json"))
  hps.data.n = 40
  hps.data.dimension = 2
  hps.ransac.max_iterations = 200
  hps.sweep.out_dir = str(tmp_path / "sweep")
  path = str(tmp_path / "config.json")
  with open(path, "w") as f:
    json.dump(hps.to_dict(), f)
  return path


def test_hparams_nesting_and_round_trip(tmp_path):
  hps = utils.HParams(data={"n": 3, "family": "regression"}, runs=2)
  assert hps.data.n == 3 and "data" in hps
  assert hps.to_dict() == {"data": {"n": 3, "family": "regression"}, "runs": 2}
  utils.save_hparams(hps, str(tmp_path / "out"))
  saved = utils.get_hparams_from_file(str(tmp_path / "out" / "config.json"))
  assert saved.data.family == "regression"


def test_override_only_when_given():
  hps = utils.HParams(solver={"tol": 1e-8})
  utils.override(hps, "solver", "tol", None)
  assert hps.solver.tol == 1e-8
  utils.override(hps, "solver", "tol", 1e-6)
  utils.override(hps, "bco", "max_cycles", 3)
  assert hps.solver.tol == 1e-6 and hps.bco.max_cycles == 3


def test_num_workers(monkeypatch):
  monkeypatch.setenv("MAXCON_THREADS", "3")
  assert utils.num_workers() == 3
  monkeypatch.setenv("MAXCON_THREADS", "zero")
  with pytest.raises(ValueError):
    utils.num_workers()
  monkeypatch.delenv("MAXCON_THREADS")
  assert utils.num_workers() >= 1


def test_parse_float_list():
  assert utils.parse_float_list("1, 2.5,3") == [1., 2.5, 3.]
  assert utils.parse_float_list(None) is None


def test_fit_toy_instance_from_x0(toy_file, tmp_path, capsys):
  out = str(tmp_path / "fit")
  assert fit.main(fit_args(toy_file, x0="5", out=out)) == 0
  record = json.loads(capsys.readouterr().out)
  assert record["consensus"] == 2
  assert record["stages"][0]["consensus"] == 1
  assert record["runtime"] >= 0.
  assert record["traces"]["ibco"]
  with open(os.path.join(out, "record.json")) as f:
    assert json.load(f)["consensus"] == 2
  assert os.path.isfile(os.path.join(out, "config.json"))



def test_fit_solver_failure_still_exits_cleanly(toy_file, tmp_path, capsys, monkeypatch):
  monkeypatch.setattr(socp.NormalEquations, "solve", lambda self, r: np.full(np.shape(r), np.nan))
  assert fit.main(fit_args(toy_file, x0="5", out=str(tmp_path / "fit"))) == 0
  record = json.loads(capsys.readouterr().out)
  assert record["solver_failed"]
  assert record["consensus"] >= record["stages"][0]["consensus"]

def test_fit_rejects_unknown_method(toy_file, tmp_path):
  assert fit.main(fit_args(toy_file, method="lmeds", out=str(tmp_path / "f"))) == 1


def test_fit_missing_file(tmp_path):
  assert fit.main(fit_args(str(tmp_path / "none.json"), out=str(tmp_path / "f"))) == 1


def test_ransac_ibco_never_worse():
  problem, gt = generate_problem("regression", RegressionGenConfig(n=60, dimension=3, eta=50., seed=4))
  hps = utils.HParams(ransac={"max_iterations": 30})
  record, _ = fit.run_method(problem, "ransac+ibco", seed=1, hps=hps, gt=gt)
  ransac_stage, ibco_stage = record.stages
  assert ransac_stage["stage"] == "ransac" and ibco_stage["stage"] == "ibco"
  assert ibco_stage["consensus"] >= ransac_stage["consensus"]
  assert record.consensus == ibco_stage["consensus"]
  assert record.e_ls is not None and record.e_ls >= 0.


def test_least_squares_initialization():
  problem, _ = generate_problem("regression", RegressionGenConfig(n=40, dimension=2, eta=20., seed=8))
  record, trace = fit.run_method(problem, "ibco", init="lsq")
  assert record.stages[0]["source"] == "lsq"
  assert record.consensus >= record.stages[0]["consensus"]
  assert trace is not None


def test_run_record_invariants():
  with pytest.raises(ValueError):
    fit.RunRecord("ransac", 0, 3, 4, 0.1)
  with pytest.raises(ValueError):
    fit.RunRecord("ransac", 0, 3, 1, -1.)


def test_generate_writes_instance_and_sidecar(regression_config, tmp_path, capsys):
  out = str(tmp_path / "new" / "dir")
  args = argparse.Namespace(config=regression_config, output_dir=out, name=None, eta=60.,
                            seed=3, epsilon=None)
  assert generate.main(args) == 0
  path = capsys.readouterr().out.strip()
  assert path == os.path.join(out, "regression_eta60_seed3.json")
  assert os.path.isfile(ground_truth_path(path))
  assert load_problem(path).instance.size == 40


def test_generate_rejects_invalid_eta(regression_config, tmp_path):
  args = argparse.Namespace(config=regression_config, output_dir=str(tmp_path / "g"), name=None,
                            eta=120., seed=None, epsilon=None)
  assert generate.main(args) != 0


def test_summary_reference_and_std():
  runs = []
  for run, (r, i) in enumerate([(10, 12), (20, 20), (5, 6)]):
    runs.append({"eta": 0., "run": run, "method": "ransac", "consensus": r, "runtime": 0.1, "e_ls": 0.2})
    runs.append({"eta": 0., "run": run, "method": "ransac+ibco", "consensus": i, "runtime": 0.3, "e_ls": 0.1})
  runs.append({"eta": 0., "run": 3, "method": "ransac+ibco", "error": "boom"})
  table = sweep.summarize_runs(runs, [0.], ["ransac", "ransac+ibco"])
  ransac_row, ibco_row = table
  assert ransac_row["rel_diff_mean"] == 0.
  assert ibco_row["rel_diff_mean"] == pytest.approx(np.mean([0.2, 0., 0.2]), abs=1e-12)
  assert ibco_row["failures"] == 1 and ibco_row["runs"] == 4
  assert ransac_row["consensus_std"] == pytest.approx(np.std([10, 20, 5]), abs=1e-12)
  assert all(row["consensus_std"] >= 0. for row in table)


def test_sweep_rows_per_eta_and_method(regression_config, tmp_path):
  hps = utils.get_hparams_from_file(regression_config)
  hps.sweep.runs = 1
  exp = sweep.ExperimentConfig.from_hparams(hps)
  assert len(exp.etas) == 16
  exp.etas = [0., 40.]
  exp.methods = ["ransac", "ransac+ibco"]
  runs, table = sweep.run_sweep(exp, hps, workers=1, progress=False)
  assert len(table) == 4
  assert len(runs) == 4
  for row in table:
    if row["method"] == "ransac":
      assert row["rel_diff_mean"] == 0.
  path = str(tmp_path / "summary.csv")
  sweep.write_summary(path, table)
  with open(path) as f:
    assert tuple(next(csv.reader(f))) == sweep.SUMMARY_COLUMNS


def test_sweep_seeds_do_not_depend_on_workers(regression_config):
  hps = utils.get_hparams_from_file(regression_config)
  exp = sweep.ExperimentConfig.from_hparams(hps)
  seeds = [t["seed"] for t in exp.tasks(hps)]
  assert seeds == [t["seed"] for t in exp.tasks(hps)]
  assert len(set(seeds)) == len(seeds)


def test_experiment_config_validation():
  with pytest.raises(ValueError):
    sweep.ExperimentConfig(family="regression", runs=0)
  with pytest.raises(ValueError):
    sweep.ExperimentConfig(family="regression", etas=[120.])
  with pytest.raises(ValueError):
    sweep.ExperimentConfig(family="regression", methods=["lmeds"])


def test_ingest_check_converts_csv(tmp_path, capsys):
  rng = np.random.default_rng(0)
  u = rng.uniform(0., 500., size=(12, 2))
  lines = ["u_x,u_y,v_x,v_y"] + ["{},{},{},{}".format(a, b, a + 3., b - 2.) for a, b in u]
  src = tmp_path / "m.csv"
  src.write_text("\n".join(lines))
  out = str(tmp_path / "inst.json")
  args = argparse.Namespace(input=str(src), family="homography", epsilon=None, out=out)
  assert ingest_check.main(args) == 0
  assert "12 correspondences" in capsys.readouterr().out
  assert load_problem(out).instance.epsilon == 4.


class RecordingWriter:
  def __init__(self):
    self.scalars = []

  def add_scalar(self, tag, value, step):
    self.scalars.append((tag, value, step))

  def flush(self):
    pass


def test_traces_reach_summary_writer(toy_instance):
  _, trace = run_ibco(toy_instance, [5.])
  writer = RecordingWriter()
  utils.write_traces(writer, trace)
  tags = {tag for tag, _, _ in writer.scalars}
  assert {"ibco/delta_l", "ibco/achieved", "bco/objective", "bco/consensus"} <= tags
  objectives = [v for tag, v, _ in writer.scalars if tag == "bco/objective"]
  assert len(objectives) == sum(len(s.bco_trace) for s in trace.steps)
