import math

import numpy as np
import pytest

from conftest import pair_vertex_optimum
from models import build_regression_instance, get_family, make_problem
from problem import in_domain
from ransac import RansacConfig, random_init, required_iterations, run_ransac
from synthetic import GeometryGenConfig, RegressionGenConfig, generate_problem


def test_config_validation():
  with pytest.raises(ValueError):
    RansacConfig(confidence=1.)
  with pytest.raises(ValueError):
    RansacConfig(confidence=0.)
  with pytest.raises(ValueError):
    RansacConfig(max_iterations=0)


def test_required_iterations_closed_form():
  expected = math.log(0.01) / math.log(1. - 0.3 ** 8)
  assert required_iterations(0.3, 8, 0.99) == math.ceil(expected)
  assert 6e4 < required_iterations(0.3, 8, 0.99) < 8e4
  assert required_iterations(1., 8, 0.99) == 1
  assert required_iterations(0., 8, 0.99) == math.inf


def test_outlier_free_data_stops_after_one_sample(rng):
  A = rng.uniform(-1., 1., size=(50, 3))
  rows = np.concatenate([A, (A @ rng.uniform(-1., 1., size=3))[:, None]], axis=1)
  problem = make_problem("regression", rows, 0.3)
  result = run_ransac(problem.instance, problem.family, problem.data, RansacConfig(seed=0))
  assert result.estimate.consensus == 50
  assert result.iterations == 1


def test_reproducible_for_fixed_seed():
  problem, _ = generate_problem("regression", RegressionGenConfig(n=100, dimension=3, eta=50., seed=2))
  runs = [run_ransac(problem.instance, problem.family, problem.data, RansacConfig(seed=7))
          for _ in range(2)]
  assert runs[0].estimate.consensus == runs[1].estimate.consensus
  np.testing.assert_array_equal(runs[0].estimate.x, runs[1].estimate.x)


def test_never_exceeds_enumeration_optimum(rng):
  for _ in range(5):
    rows = rng.uniform(-1., 1., size=(12, 3))
    inst = build_regression_instance(rows, 0.3)
    family = get_family("regression", 2)
    result = run_ransac(inst, family, rows, RansacConfig(seed=0, exhaustive=True))
    assert result.estimate.consensus <= pair_vertex_optimum(rows, 0.3)


def test_exhaustive_mode_visits_every_subset(rng):
  rows = rng.uniform(-1., 1., size=(8, 3))
  inst = build_regression_instance(rows, 0.3)
  result = run_ransac(inst, get_family("regression", 2), rows, RansacConfig(exhaustive=True))
  assert result.iterations == 28


def test_cap_limits_iterations():
  problem, _ = generate_problem("regression", RegressionGenConfig(n=200, dimension=8, eta=70., seed=3))
  result = run_ransac(problem.instance, problem.family, problem.data,
                      RansacConfig(seed=0, max_iterations=50))
  assert result.iterations == 50


def test_too_few_data():
  rows = np.array([[1., 2., 3.]])
  inst = build_regression_instance(rows, 0.3)
  with pytest.raises(ValueError):
    run_ransac(inst, get_family("regression", 2), rows)


def test_all_degenerate_subsets():
  rows = np.array([[1., 2., 3.], [2., 4., 6.], [3., 6., 9.]])
  inst = build_regression_instance(rows, 0.3)
  result = run_ransac(inst, get_family("regression", 2), rows, RansacConfig(max_iterations=20))
  assert result.degenerate
  assert result.estimate.x.tolist() == [0., 0.]


def test_random_init_regression_is_reproducible():
  problem, _ = generate_problem("regression", RegressionGenConfig(n=30, dimension=8, seed=0))
  a = random_init(problem.instance, problem.family, problem.data, seed=5)
  b = random_init(problem.instance, problem.family, problem.data, seed=5)
  assert a.shape == (8,)
  np.testing.assert_array_equal(a, b)


def test_random_init_triangulation_lies_in_domain():
  problem, _ = generate_problem("triangulation", GeometryGenConfig(n=20, eta=20., seed=1))
  x = random_init(problem.instance, problem.family, problem.data, seed=3)
  assert np.all(in_domain(problem.instance, x))


def test_homography_ransac_finds_planted_inliers():
  problem, gt = generate_problem("homography", GeometryGenConfig(n=60, eta=30., seed=6))
  result = run_ransac(problem.instance, problem.family, problem.data, RansacConfig(seed=0))
  assert result.estimate.consensus >= 0.8 * gt.inlier_mask_true.sum()
