import numpy as np
import pytest

from conftest import regression_1d
from models import build_regression_instance, build_triangulation_instance, ViewObservation
from problem import (
  ConsensusInstance,
  DomainError,
  Estimate,
  ResidualFunctional,
  calibrate_margin,
  consensus,
  in_domain,
  residual,
  residuals,
  shifted_residual,
  shifted_residuals,
)


def two_cameras():
  P1 = np.concatenate([np.eye(3), np.zeros((3, 1))], axis=1)
  P2 = np.concatenate([np.eye(3), -np.array([[1.], [0.], [0.]])], axis=1)
  return P1, P2


def test_residual_regression_exact_and_offset():
  inst = build_regression_instance(np.array([[1., 0., 2.]]), 0.3)
  assert residual(inst, 0, [2., 0.]) == 0.
  assert residual(inst, 0, [3., 0.]) == pytest.approx(1.)


def test_residual_triangulation_exact_reprojection():
  P1, P2 = two_cameras()
  X = np.array([0., 0., 5.])
  views = [ViewObservation(P1, (0., 0.)), ViewObservation(P2, (-0.2, 0.))]
  inst = build_triangulation_instance(views, 1.)
  assert residual(inst, 0, X) == pytest.approx(0., abs=1e-12)
  assert residual(inst, 1, X) == pytest.approx(0., abs=1e-12)
  assert np.all(in_domain(inst, X))


def test_point_behind_camera_is_outside_domain():
  P1, P2 = two_cameras()
  views = [ViewObservation(P1, (0., 0.)), ViewObservation(P2, (0.2, 0.))]
  inst = build_triangulation_instance(views, 1.)
  X = np.array([0., 0., -5.])
  with pytest.raises(DomainError):
    residual(inst, 0, X)
  assert np.all(np.isinf(residuals(inst, X)))
  est = consensus(inst, X)
  assert est.consensus == 0
  assert not est.inlier_mask.any()


@pytest.mark.parametrize("x, expected", [(0.2, -0.1), (0.5, 0.2)])
def test_shifted_residual(x, expected):
  inst = regression_1d([0.])
  assert shifted_residual(inst, 0, [x]) == pytest.approx(expected)


def test_shifted_residual_zero_on_boundary():
  inst = regression_1d([1.], epsilon=0.5)
  assert shifted_residual(inst, 0, [1.5]) == pytest.approx(0., abs=1e-15)
  assert consensus(inst, [1.5]).consensus == 1


def test_consensus_three_points(toy_instance):
  est = consensus(toy_instance, [0.])
  assert est.consensus == 2
  assert est.inlier_mask.tolist() == [True, True, False]


def test_consensus_matches_residual_rule(rng):
  rows = rng.uniform(-1., 1., size=(50, 4))
  inst = build_regression_instance(rows, 0.3)
  x = rng.uniform(-1., 1., size=3)
  est = consensus(inst, x)
  assert est.consensus == int(est.inlier_mask.sum())
  np.testing.assert_array_equal(est.inlier_mask, residuals(inst, x) <= 0.3)
  np.testing.assert_allclose(shifted_residuals(inst, x),
                             np.abs(rows[:, :3] @ x - rows[:, 3]) - 0.3, atol=1e-12)


def test_residual_quasiconvex_along_segments(rng):
  P1, P2 = two_cameras()
  views = [ViewObservation(P1, (0.1, -0.2)), ViewObservation(P2, (0.3, 0.1))]
  inst = build_triangulation_instance(views, 1.)
  for _ in range(200):
    x1 = rng.uniform(-1., 1., size=3) + [0., 0., 5.]
    x2 = rng.uniform(-1., 1., size=3) + [0., 0., 5.]
    t = rng.uniform()
    xm = t * x1 + (1. - t) * x2
    for i in range(2):
      assert residual(inst, i, xm) <= max(residual(inst, i, x1), residual(inst, i, x2)) + 1e-9


def test_inlier_region_is_convex(rng):
  P1, P2 = two_cameras()
  views = [ViewObservation(P1, (0., 0.)), ViewObservation(P2, (-0.2, 0.))]
  inst = build_triangulation_instance(views, 0.05)
  found = 0
  while found < 100:
    x1 = rng.normal([0., 0., 5.], 0.1)
    x2 = rng.normal([0., 0., 5.], 0.1)
    r1, r2 = shifted_residuals(inst, x1), shifted_residuals(inst, x2)
    if not (np.all(r1 <= 0) and np.all(r2 <= 0)):
      continue
    found += 1
    t = rng.uniform()
    assert np.all(shifted_residuals(inst, t * x1 + (1. - t) * x2) <= 1e-9)


def test_instance_validation():
  with pytest.raises(ValueError):
    ConsensusInstance(np.zeros((2, 1, 3)), np.zeros((3, 3)), 0.3)
  with pytest.raises(ValueError):
    ConsensusInstance(np.zeros((2, 1, 3)), np.ones((2, 3)), -1.)
  with pytest.raises(ValueError):
    ConsensusInstance(np.zeros((2, 1, 3)), np.ones((2, 3)), 0.3, domain_margin=0.)
  with pytest.raises(ValueError):
    ConsensusInstance(np.full((2, 1, 3), np.nan), np.ones((2, 3)), 0.3)


def test_instance_is_read_only(toy_instance):
  with pytest.raises(ValueError):
    toy_instance.numerators[0, 0, 0] = 7.


def test_from_functionals_checks_shapes():
  f1 = ResidualFunctional(np.ones((1, 3)), np.array([0., 0., 1.]))
  f2 = ResidualFunctional(np.ones((2, 3)), np.array([0., 0., 1.]))
  with pytest.raises(ValueError):
    ConsensusInstance.from_functionals([f1, f2], 0.3)
  inst = ConsensusInstance.from_functionals([f1, f1], 0.3)
  assert inst.size == 2 and inst.dimension == 2 and inst.height == 1
  assert len(inst.functionals) == 2


def test_estimate_count_must_match_mask():
  with pytest.raises(ValueError):
    Estimate(np.zeros(1), 2, np.array([True, False]))


def test_consensus_rejects_wrong_dimension(toy_instance):
  with pytest.raises(ValueError):
    consensus(toy_instance, [0., 1.])


def test_calibrate_margin_scales_with_denominators():
  P1, P2 = two_cameras()
  views = [ViewObservation(P1, (0., 0.)), ViewObservation(P2, (-0.2, 0.))]
  inst = build_triangulation_instance(views, 1.)
  calibrated = calibrate_margin(inst, [0., 0., 5.])
  assert calibrated.domain_margin == pytest.approx(5e-6)
  assert calibrated.epsilon == inst.epsilon
