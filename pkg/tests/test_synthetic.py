import numpy as np
import pytest

from conftest import regression_1d
from problem import consensus
from synthetic import (
  GeometryGenConfig,
  GroundTruth,
  RegressionGenConfig,
  UndefinedMetricError,
  e_ls,
  generate,
  generate_problem,
  make_config,
  planted_inliers,
)

FAMILIES = ["regression", "homography", "triangulation", "fundamental"]


def small_config(tag, **kwargs):
  if tag == "regression":
    return RegressionGenConfig(n=120, dimension=4, **kwargs)
  return GeometryGenConfig(n=60, **kwargs)


@pytest.mark.parametrize("tag", FAMILIES)
def test_outlier_free_truth_is_all_inliers(tag):
  inst, gt, _ = generate(tag, small_config(tag, eta=0., seed=1))
  assert consensus(inst, gt.x_true).consensus == inst.size
  assert gt.inlier_mask_true.all()


@pytest.mark.parametrize("tag", FAMILIES)
@pytest.mark.parametrize("eta", [20., 55.])
def test_planted_classification_is_exact(tag, eta):
  inst, gt, _ = generate(tag, small_config(tag, eta=eta, seed=2))
  est = consensus(inst, gt.x_true)
  assert gt.inlier_mask_true.sum() == planted_inliers(inst.size, eta)
  np.testing.assert_array_equal(est.inlier_mask, gt.inlier_mask_true)


def test_planted_inliers_rounds_up():
  assert planted_inliers(100, 75.) == 25
  assert planted_inliers(7, 50.) == 4
  assert planted_inliers(10, 100.) == 0


@pytest.mark.parametrize("tag", FAMILIES)
def test_fixed_seed_is_deterministic(tag):
  a = generate(tag, small_config(tag, eta=30., seed=9))[0]
  b = generate(tag, small_config(tag, eta=30., seed=9))[0]
  assert a.numerators.tobytes() == b.numerators.tobytes()
  assert a.denominators.tobytes() == b.denominators.tobytes()


def test_regression_defaults_match_benchmark():
  inst, gt, data = generate("regression", RegressionGenConfig(seed=0))
  assert inst.size == 1000 and inst.dimension == 8
  assert inst.epsilon == 0.3
  assert data.shape == (1000, 9)


def test_eta_validation():
  with pytest.raises(ValueError):
    RegressionGenConfig(eta=120.)
  with pytest.raises(ValueError):
    GeometryGenConfig(eta=-1.)


def test_make_config_rejects_unknown_settings():
  cfg = make_config("homography", family="homography", n=10, eta=5.)
  assert isinstance(cfg, GeometryGenConfig) and cfg.n == 10
  with pytest.raises(ValueError):
    make_config("regression", n=10, focal=500.)
  with pytest.raises(ValueError):
    make_config("essential", n=10)


def test_generate_problem_keeps_transforms():
  problem, gt = generate_problem("fundamental", GeometryGenConfig(n=40, eta=25., seed=3))
  est = consensus(problem.instance, gt.x_true)
  np.testing.assert_array_equal(est.inlier_mask, gt.inlier_mask_true)
  assert problem.transforms is not None


def test_e_ls_zero_at_truth_on_exact_inliers():
  inst = regression_1d([1., 1., 4.])
  gt = GroundTruth([1.], [True, True, False])
  assert e_ls(np.array([1.]), gt, inst) == 0.


def test_e_ls_single_inlier():
  inst = regression_1d([0.2, 9.])
  gt = GroundTruth([0.], [True, False])
  assert e_ls(np.array([0.]), gt, inst) == pytest.approx(0.2)


def test_e_ls_undefined_without_inliers():
  inst = regression_1d([0.2])
  with pytest.raises(UndefinedMetricError):
    e_ls(np.array([0.]), GroundTruth([0.], [False]), inst)
