import numpy as np
import pytest

from bco import BcoLimits, run_bco
from conftest import regression_1d
from problem import consensus
from synthetic import GeometryGenConfig, RegressionGenConfig, generate_homography, generate_regression
from utils import HParams


def assert_descent(trace, tol=1e-7):
  objectives = [t["objective"] for t in trace]
  for before, after in zip(objectives, objectives[1:]):
    assert after <= before + tol


def test_reaches_target_from_outlying_start(toy_instance):
  assert consensus(toy_instance, [5.]).consensus == 1
  result = run_bco(toy_instance, [5.], 2)
  assert result.converged_to_zero
  assert consensus(toy_instance, result.state.x).consensus >= 2
  assert_descent(result.trace)


def test_target_already_met_stops_immediately(toy_instance):
  result = run_bco(toy_instance, [0.], 2)
  assert result.converged_to_zero
  assert result.iterations == 1
  assert result.state.x[0] == 0.
  assert len(result.trace) == 1


def test_infeasible_target_leaves_positive_objective():
  inst = regression_1d([0., 5., 10.])
  result = run_bco(inst, [5.], 3)
  assert not result.converged_to_zero
  assert result.state.objective > 1.
  assert_descent(result.trace)


def test_trace_records_both_half_steps(toy_instance):
  result = run_bco(toy_instance, [5.], 2)
  steps = [t["step"] for t in result.trace]
  assert steps[0] == "y"
  assert "xs" in steps
  for record in result.trace:
    assert set(record) == {"cycle", "step", "objective", "consensus"}


def test_zero_objective_certifies_target(rng):
  inst, gt, _ = generate_regression(RegressionGenConfig(n=60, dimension=3, eta=40., seed=5))
  x0 = rng.uniform(-1., 1., size=3)
  for delta in (10, 20, 30):
    result = run_bco(inst, x0, delta)
    assert_descent(result.trace)
    if result.state.objective <= 1e-9:
      assert consensus(inst, result.state.x).consensus >= delta


def test_homography_descent():
  inst, gt, _ = generate_homography(GeometryGenConfig(n=30, eta=30., seed=2))
  x0 = gt.x_true * (1. + 1e-3)
  result = run_bco(inst, x0, 25)
  assert_descent(result.trace)
  assert result.state.slacks.shape == (30,)


def test_limits_from_hparams():
  hps = HParams(bco={"max_cycles": 5, "zero_tol": 1e-8},
                solver={"tol": 1e-7, "max_iters": 50})
  limits = BcoLimits.from_hparams(hps.bco, hps.solver)
  assert limits.max_cycles == 5
  assert limits.zero_tol == 1e-8
  assert limits.solver.tol == 1e-7
  assert limits.solver.max_iters == 50
  assert limits.solver.bound_scale == 1e3


def test_max_cycles_bounds_iterations():
  result = run_bco(regression_1d([0., 5., 10.]), [5.], 3, BcoLimits(max_cycles=1))
  assert result.iterations == 1
