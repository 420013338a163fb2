"""Synthetic instances with planted inliers.

Regression data follow the usual outlier benchmark: a_i and x_true uniform
in [-1, 1], inlier noise uniform in [-0.3, 0.3] and outliers re-noised with a
Gaussian until their noise leaves that band. Geometry generators plant a
ground-truth model, perturb inliers inside a disk of radius
noise_ratio * epsilon and resample outliers until their error exceeds
outlier_gap * epsilon.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

import commons
from models import (
  DEFAULT_EPSILON,
  ViewObservation,
  build_fundamental_instance,
  build_homography_instance,
  build_regression_instance,
  build_triangulation_instance,
  instance_transforms,
  make_problem,
  normalize_correspondences,
  to_params,
)
from problem import residuals

logger = logging.getLogger(__name__)


class UndefinedMetricError(ValueError):
  """The ground-truth inlier set is empty."""


def _check_eta(eta):
  if not 0 <= eta <= 100:
    raise ValueError("eta must lie in [0, 100], got {}".format(eta))


@dataclass
class RegressionGenConfig:
  n: int = 1000
  dimension: int = 8
  eta: float = 0.
  inlier_noise_bound: float = 0.3
  outlier_sigma: float = 1.5
  epsilon: float = 0.3
  seed: int = 0

  def __post_init__(self):
    _check_eta(self.eta)
    if self.n < 1 or self.dimension < 1:
      raise ValueError("n and dimension must be positive")
    if not (self.inlier_noise_bound > 0 and self.outlier_sigma > 0):
      raise ValueError("noise bounds must be positive")


@dataclass
class GeometryGenConfig:
  n: int = 100
  eta: float = 0.
  epsilon: float = None
  noise_ratio: float = 0.75
  outlier_gap: float = 1.01
  image_width: float = 640.
  image_height: float = 480.
  focal: float = 500.
  seed: int = 0

  def __post_init__(self):
    _check_eta(self.eta)
    if self.n < 1:
      raise ValueError("n must be positive")
    if not 0 <= self.noise_ratio < 1 or self.outlier_gap <= 1:
      raise ValueError("need 0 <= noise_ratio < 1 < outlier_gap")

  def epsilon_for(self, tag):
    return DEFAULT_EPSILON[tag] if self.epsilon is None else float(self.epsilon)


@dataclass
class GroundTruth:
  x_true: np.ndarray
  inlier_mask_true: np.ndarray

  def __post_init__(self):
    self.x_true = np.asarray(self.x_true, dtype=np.float64)
    self.inlier_mask_true = np.asarray(self.inlier_mask_true, dtype=bool)


def planted_inliers(n, eta):
  return int(math.ceil(n * (1. - eta / 100.) - 1e-9))


def _outlier_mask(rng, n, eta):
  mask = np.zeros(n, dtype=bool)
  n_out = n - planted_inliers(n, eta)
  mask[rng.choice(n, size=n_out, replace=False)] = True
  return mask


def _disk(rng, n, radius):
  r = radius * np.sqrt(rng.uniform(size=n))
  theta = rng.uniform(0., 2. * np.pi, size=n)
  return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def _image_points(rng, n, cfg):
  return rng.uniform([0., 0.], [cfg.image_width, cfg.image_height], size=(n, 2))


def generate_regression(cfg):
  rng = np.random.default_rng(cfg.seed)
  n, d = cfg.n, cfg.dimension
  A = rng.uniform(-1., 1., size=(n, d))
  x_true = rng.uniform(-1., 1., size=d)
  noise = rng.uniform(-cfg.inlier_noise_bound, cfg.inlier_noise_bound, size=n)
  outliers = _outlier_mask(rng, n, cfg.eta)
  redo = outliers.copy()
  while np.any(redo):
    noise[redo] = rng.normal(0., cfg.outlier_sigma, size=redo.sum())
    redo = outliers & (np.abs(noise) <= cfg.inlier_noise_bound)
  b = A @ x_true + noise
  data = np.concatenate([A, b[:, None]], axis=1)
  inst = build_regression_instance(data, cfg.epsilon)
  return inst, GroundTruth(x_true, ~outliers), data


def _random_homography(rng, cfg):
  cx, cy = cfg.image_width / 2., cfg.image_height / 2.
  theta = rng.uniform(-np.pi / 12., np.pi / 12.)
  scale = rng.uniform(0.8, 1.2)
  t = rng.uniform(-40., 40., size=2)
  p = rng.uniform(-2e-4, 2e-4, size=2)
  A = np.array([[scale * np.cos(theta), -scale * np.sin(theta), t[0]],
                [scale * np.sin(theta), scale * np.cos(theta), t[1]],
                [p[0], p[1], 1.]])
  C = np.array([[1., 0., cx], [0., 1., cy], [0., 0., 1.]])
  H = C @ A @ np.linalg.inv(C)
  return H / H[2, 2]


def _map(H, pts):
  return commons.apply_transform(H, pts)


def generate_homography(cfg):
  rng = np.random.default_rng(cfg.seed)
  eps = cfg.epsilon_for("homography")
  H = _random_homography(rng, cfg)
  u = _image_points(rng, cfg.n, cfg)
  v = _map(H, u) + _disk(rng, cfg.n, cfg.noise_ratio * eps)
  outliers = _outlier_mask(rng, cfg.n, cfg.eta)
  redo = outliers.copy()
  while np.any(redo):
    v[redo] = _image_points(rng, redo.sum(), cfg)
    err = np.linalg.norm(_map(H, u) - v, axis=1)
    redo = outliers & (err <= cfg.outlier_gap * eps)
  corrs = np.concatenate([u, v], axis=1)
  inst = build_homography_instance(corrs, eps)
  return inst, GroundTruth(to_params("homography", H), ~outliers), corrs


def _look_at(center, target, K):
  z = target - center
  z = z / np.linalg.norm(z)
  up = np.array([0., 0., 1.])
  x = np.cross(up, z)
  if np.linalg.norm(x) < 1e-8:
    x = np.cross(np.array([0., 1., 0.]), z)
  x = x / np.linalg.norm(x)
  y = np.cross(z, x)
  R = np.stack([x, y, z])
  return K @ np.concatenate([R, -(R @ center)[:, None]], axis=1)


def _intrinsics(cfg):
  return np.array([[cfg.focal, 0., cfg.image_width / 2.],
                   [0., cfg.focal, cfg.image_height / 2.],
                   [0., 0., 1.]])


def _project(P, X):
  return commons.dehomogenize(P @ np.append(X, 1.))


def generate_triangulation(cfg):
  """A point near the origin seen by n cameras on a ring of radius 6 to 10."""
  rng = np.random.default_rng(cfg.seed)
  eps = cfg.epsilon_for("triangulation")
  K = _intrinsics(cfg)
  X = rng.uniform(-1., 1., size=3)
  cameras = []
  for _ in range(cfg.n):
    radius = rng.uniform(6., 10.)
    azimuth = rng.uniform(0., 2. * np.pi)
    elevation = rng.uniform(-0.3, 0.3)
    center = radius * np.array([np.cos(elevation) * np.cos(azimuth),
                                np.cos(elevation) * np.sin(azimuth),
                                np.sin(elevation)])
    target = rng.uniform(-0.5, 0.5, size=3)
    cameras.append(_look_at(center, target, K))
  proj = np.array([_project(P, X) for P in cameras])
  obs = proj + _disk(rng, cfg.n, cfg.noise_ratio * eps)
  outliers = _outlier_mask(rng, cfg.n, cfg.eta)
  redo = outliers.copy()
  while np.any(redo):
    obs[redo] = _image_points(rng, redo.sum(), cfg)
    redo = outliers & (np.linalg.norm(obs - proj, axis=1) <= cfg.outlier_gap * eps)
  views = [ViewObservation(P, u) for P, u in zip(cameras, obs)]
  inst = build_triangulation_instance(views, eps)
  return inst, GroundTruth(X, ~outliers), views


def _rotation(angles):
  ax, ay, az = angles
  Rx = np.array([[1, 0, 0], [0, np.cos(ax), -np.sin(ax)], [0, np.sin(ax), np.cos(ax)]])
  Ry = np.array([[np.cos(ay), 0, np.sin(ay)], [0, 1, 0], [-np.sin(ay), 0, np.cos(ay)]])
  Rz = np.array([[np.cos(az), -np.sin(az), 0], [np.sin(az), np.cos(az), 0], [0, 0, 1]])
  return Rz @ Ry @ Rx


def generate_fundamental(cfg, max_attempts=20):
  """Two-view correspondences; noise and outlier gaps are set in the normalized frame.

  The normalizing transforms are taken from the noise-free layout and stored
  with the instance, so the planted classification is exact.
  """
  rng = np.random.default_rng(cfg.seed)
  eps = cfg.epsilon_for("fundamental")
  K = _intrinsics(cfg)
  Kinv = np.linalg.inv(K)
  for _ in range(max_attempts):
    R = _rotation(rng.uniform(-0.1, 0.1, size=3))
    t = np.array([rng.uniform(0.5, 1.), rng.uniform(-0.2, 0.2), rng.uniform(-0.1, 0.1)])
    F_pix = Kinv.T @ commons.skew(t) @ R @ Kinv

    u = _image_points(rng, cfg.n, cfg)
    depth = rng.uniform(4., 8., size=cfg.n)
    X = (commons.homogenize(u) @ Kinv.T) * depth[:, None]
    v = commons.dehomogenize((X @ R.T + t) @ K.T)
    outliers = _outlier_mask(rng, cfg.n, cfg.eta)
    v[outliers] = _image_points(rng, outliers.sum(), cfg)

    corrs = np.concatenate([u, v], axis=1)
    normalized, (T1, T2) = normalize_correspondences(corrs)
    Fn = np.linalg.inv(T2).T @ F_pix @ np.linalg.inv(T1)
    if abs(Fn[2, 2]) > 1e-6 * np.linalg.norm(Fn):
      break
  Fn = Fn / Fn[2, 2]

  un, vn = normalized[:, :2], normalized[:, 2:]
  lines = commons.homogenize(un) @ Fn.T
  # inliers: move v along the epipolar normal by a bounded algebraic amount
  lnorm = np.linalg.norm(lines[:, :2], axis=1)
  target = rng.uniform(-cfg.noise_ratio * eps, cfg.noise_ratio * eps, size=cfg.n)
  current = np.sum(commons.homogenize(vn) * lines, axis=1)
  shift = ((target - current) / lnorm ** 2)[:, None] * lines[:, :2]
  vn = np.where(outliers[:, None], vn, vn + shift)

  redo = outliers & (np.abs(np.sum(commons.homogenize(vn) * lines, axis=1))
                     <= cfg.outlier_gap * eps)
  while np.any(redo):
    fresh = commons.apply_transform(T2, _image_points(rng, redo.sum(), cfg))
    vn[redo] = fresh
    err = np.abs(np.sum(commons.homogenize(vn) * lines, axis=1))
    redo = outliers & (err <= cfg.outlier_gap * eps)

  v = commons.apply_transform(np.linalg.inv(T2), vn)
  corrs = np.concatenate([u, v], axis=1)
  inst = build_fundamental_instance(corrs, eps, transforms=(T1, T2))
  return inst, GroundTruth(Fn.ravel()[:8], ~outliers), corrs


def e_ls(x_ls, gt, inst):
  """Mean residual of x_ls over the ground-truth inliers."""
  mask = np.asarray(gt.inlier_mask_true, dtype=bool)
  if not np.any(mask):
    raise UndefinedMetricError("the ground-truth inlier set is empty")
  return float(np.mean(residuals(inst, x_ls)[mask]))


GENERATORS = {
  "regression": generate_regression,
  "homography": generate_homography,
  "triangulation": generate_triangulation,
  "fundamental": generate_fundamental,
}


def generate(tag, cfg):
  if tag not in GENERATORS:
    raise ValueError("unknown model family '{}'".format(tag))
  inst, gt, raw = GENERATORS[tag](cfg)
  logger.debug("%s instance: %d data, %d planted inliers, seed %d", tag, inst.size,
               int(gt.inlier_mask_true.sum()), cfg.seed)
  return inst, gt, raw


def make_config(tag, **kwargs):
  """Generator config for a family from flat settings (a config file's data section)."""
  kwargs.pop("family", None)
  cls = RegressionGenConfig if tag == "regression" else GeometryGenConfig
  if tag not in GENERATORS:
    raise ValueError("unknown model family '{}'".format(tag))
  known = set(cls.__dataclass_fields__)
  unknown = sorted(set(kwargs) - known)
  if unknown:
    raise ValueError("unknown {} generator settings: {}".format(tag, ", ".join(unknown)))
  return cls(**kwargs)


def generate_problem(tag, cfg):
  """Generate, then wrap the instance with its data as a FittingProblem."""
  inst, gt, raw = generate(tag, cfg)
  problem = make_problem(tag, raw, inst.epsilon, dimension=inst.dimension if tag == "regression" else None,
                         transforms=instance_transforms(inst), domain_margin=inst.domain_margin)
  return problem, gt
