"""Model families: residual construction, minimal and least-squares solvers.

Parameter vectors use a fixed scale wherever the model is projective:
homographies and fundamental matrices are stored as their first eight
entries with the last entry equal to 1, which keeps every residual a ratio of
an affine norm and an affine denominator in the parameters.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

import commons
from commons import hartley_normalize, is_degenerate, null_vector, take
from problem import ConsensusInstance, in_domain

logger = logging.getLogger(__name__)

FAMILY_TAGS = ("regression", "homography", "triangulation", "fundamental")

DEFAULT_EPSILON = {
  "regression": 0.3,
  "homography": 4.,
  "triangulation": 1.,
  # algebraic error in normalized coordinates
  "fundamental": 0.006,
}


@dataclass(frozen=True)
class ModelFamily:
  tag: str
  dimension: int
  sample_size: int

  def __post_init__(self):
    if self.tag not in FAMILY_TAGS:
      raise ValueError("unknown model family '{}'".format(self.tag))
    if self.sample_size < 1 or self.dimension < 1:
      raise ValueError("invalid family {}".format(self))


def get_family(tag, dimension=None):
  if tag == "regression":
    d = 8 if dimension is None else int(dimension)
    return ModelFamily(tag, d, d)
  if tag == "homography":
    return ModelFamily(tag, 8, 4)
  if tag == "triangulation":
    return ModelFamily(tag, 3, 2)
  if tag == "fundamental":
    return ModelFamily(tag, 8, 8)
  raise ValueError("unknown model family '{}'".format(tag))


@dataclass(frozen=True)
class Correspondence:
  u: tuple
  v: tuple

  def __post_init__(self):
    u = tuple(float(a) for a in self.u)
    v = tuple(float(a) for a in self.v)
    if len(u) != 2 or len(v) != 2 or not np.all(np.isfinite(u + v)):
      raise ValueError("a correspondence needs two finite 2D points")
    object.__setattr__(self, "u", u)
    object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class ViewObservation:
  camera: np.ndarray = field(repr=False)
  point2d: tuple

  def __post_init__(self):
    P = np.asarray(self.camera, dtype=np.float64)
    if P.shape != (3, 4) or not np.all(np.isfinite(P)):
      raise ValueError("camera must be a finite 3x4 matrix")
    if np.linalg.matrix_rank(P) < 3:
      raise ValueError("camera matrix must have full row rank")
    u = tuple(float(a) for a in self.point2d)
    if len(u) != 2 or not np.all(np.isfinite(u)):
      raise ValueError("observation must be a finite 2D point")
    P = P.copy()
    P.setflags(write=False)
    object.__setattr__(self, "camera", P)
    object.__setattr__(self, "point2d", u)


def as_correspondence_array(corrs):
  """(N, 4) array [ux, uy, vx, vy] from Correspondence objects or rows."""
  if isinstance(corrs, np.ndarray):
    arr = np.asarray(corrs, dtype=np.float64)
  else:
    corrs = list(corrs)
    if corrs and isinstance(corrs[0], Correspondence):
      arr = np.array([c.u + c.v for c in corrs], dtype=np.float64)
    else:
      arr = np.asarray(corrs, dtype=np.float64)
  if arr.ndim != 2 or arr.shape[1] != 4:
    raise ValueError("correspondences must have 4 columns, got shape {}".format(arr.shape))
  return arr


def as_views(views):
  return [v if isinstance(v, ViewObservation) else ViewObservation(*v) for v in views]


# residual construction

def build_regression_instance(data, epsilon, domain_margin=None):
  """data rows are [a_i | b_i]; residual |a_i.x - b_i|."""
  if isinstance(data, np.ndarray):
    rows = np.asarray(data, dtype=np.float64)
  else:
    data = list(data)
    lengths = {len(np.atleast_1d(r)) for r in data}
    if len(lengths) != 1:
      raise ValueError("regression rows disagree on dimension: {}".format(sorted(lengths)))
    rows = np.asarray(data, dtype=np.float64)
  if rows.ndim != 2 or rows.shape[1] < 2:
    raise ValueError("regression data must be (N, d+1), got shape {}".format(rows.shape))
  n, d1 = rows.shape
  numerators = np.concatenate([rows[:, :-1], -rows[:, -1:]], axis=1)[:, None, :]
  denominators = np.zeros((n, d1))
  denominators[:, -1] = 1.
  return ConsensusInstance(numerators, denominators, epsilon, domain_margin,
                           meta={"family": "regression"})


def _transfer_rows(corrs):
  ux, uy, vx, vy = corrs.T
  one, zero = np.ones_like(ux), np.zeros_like(ux)
  row1 = np.stack([ux, uy, one, zero, zero, zero, -vx * ux, -vx * uy, -vx], axis=1)
  row2 = np.stack([zero, zero, zero, ux, uy, one, -vy * ux, -vy * uy, -vy], axis=1)
  den = np.stack([zero, zero, zero, zero, zero, zero, ux, uy, one], axis=1)
  return np.stack([row1, row2], axis=1), den


def build_homography_instance(corrs, epsilon, domain_margin=None):
  """Transfer error ||H(u) - v|| in image 2, in pixels."""
  corrs = as_correspondence_array(corrs)
  if corrs.shape[0] < 4:
    raise ValueError("a homography needs at least 4 correspondences")
  numerators, den = _transfer_rows(corrs)
  return ConsensusInstance(numerators, den, epsilon, domain_margin,
                           meta={"family": "homography"})


def build_triangulation_instance(views, epsilon, domain_margin=None):
  """Reprojection error of a 3D point in every view; the point must lie in front of each camera."""
  views = as_views(views)
  if len(views) < 2:
    raise ValueError("triangulation needs at least 2 views")
  P = np.stack([v.camera for v in views])
  u = np.array([v.point2d for v in views])
  numerators = np.stack([P[:, 0] - u[:, :1] * P[:, 2],
                         P[:, 1] - u[:, 1:] * P[:, 2]], axis=1)
  return ConsensusInstance(numerators, P[:, 2], epsilon, domain_margin,
                           meta={"family": "triangulation"})


def _epipolar_rows(corrs):
  ux, uy, vx, vy = corrs.T
  one = np.ones_like(ux)
  return np.stack([vx * ux, vx * uy, vx, vy * ux, vy * uy, vy, ux, uy, one], axis=1)


def normalize_correspondences(corrs, transforms=None):
  """Map pixel correspondences into the normalized frame; returns (corrs_n, (T1, T2))."""
  corrs = as_correspondence_array(corrs)
  if transforms is None:
    _, T1 = hartley_normalize(corrs[:, :2])
    _, T2 = hartley_normalize(corrs[:, 2:])
  else:
    T1, T2 = (np.asarray(T, dtype=np.float64) for T in transforms)
  out = np.concatenate([commons.apply_transform(T1, corrs[:, :2]),
                        commons.apply_transform(T2, corrs[:, 2:])], axis=1)
  return out, (T1, T2)


def build_fundamental_instance(corrs, epsilon, domain_margin=None, transforms=None):
  """Algebraic epipolar error |[v;1]' F [u;1]| with Hartley-normalized coordinates."""
  corrs = as_correspondence_array(corrs)
  if corrs.shape[0] < 8:
    raise ValueError("a fundamental matrix needs at least 8 correspondences")
  normalized, (T1, T2) = normalize_correspondences(corrs, transforms)
  numerators = _epipolar_rows(normalized)[:, None, :]
  den = np.zeros((corrs.shape[0], 9))
  den[:, -1] = 1.
  meta = {"family": "fundamental", "frame": "normalized",
          "T1": T1.tolist(), "T2": T2.tolist()}
  return ConsensusInstance(numerators, den, epsilon, domain_margin, meta=meta)


# parameter conversions

def to_matrix(family, x):
  tag = family.tag if isinstance(family, ModelFamily) else family
  x = np.asarray(x, dtype=np.float64)
  if tag in ("homography", "fundamental"):
    return np.append(x, 1.).reshape(3, 3)
  return x.copy()


def to_params(family, M):
  """Fixed-scale parameters of a 3x3 model; None when the scale entry vanishes."""
  tag = family.tag if isinstance(family, ModelFamily) else family
  M = np.asarray(M, dtype=np.float64)
  if tag in ("homography", "fundamental"):
    if abs(M[2, 2]) <= 1e-12 * np.linalg.norm(M):
      return None
    return (M / M[2, 2]).ravel()[:8]
  return M.ravel().copy()


def rank2_project(F, rescale=True):
  """Nearest rank-2 matrix in Frobenius norm.

  Returns (F_hat, rescaled). With rescale the result is divided by its (3,3)
  entry; when that entry vanishes the unscaled projection is returned with
  rescaled=False.
  """
  U, s, Vt = np.linalg.svd(np.asarray(F, dtype=np.float64))
  s[2] = 0.
  F_hat = (U * s) @ Vt
  if not rescale:
    return F_hat, False
  if abs(F_hat[2, 2]) <= 1e-12 * max(np.linalg.norm(F_hat), 1e-300):
    return F_hat, False
  F_hat = F_hat / F_hat[2, 2]
  F_hat[2, 2] = 1.
  return F_hat, True


def post_step_for(family):
  """Projection applied after every BCO run; only fundamental matrices need one."""
  if family.tag != "fundamental":
    return None

  def project(x):
    F_hat, rescaled = rank2_project(to_matrix(family, x))
    if not rescaled:
      logger.warning("rank-2 projection lost the fixed scale, keeping the unprojected model")
      return np.asarray(x, dtype=np.float64)
    return F_hat.ravel()[:8]

  return project


# minimal and least-squares solvers

def _dlt_homography(corrs):
  un, T1 = hartley_normalize(corrs[:, :2])
  vn, T2 = hartley_normalize(corrs[:, 2:])
  rows, _ = _transfer_rows(np.concatenate([un, vn], axis=1))
  A = rows.reshape(-1, 9)
  if is_degenerate(A, nullity=1 if A.shape[0] >= 9 else 0):
    return None
  Hn = null_vector(A).reshape(3, 3)
  H = np.linalg.solve(T2, Hn @ T1)
  return to_params("homography", H)


def _dlt_triangulation(views):
  P = np.stack([v.camera for v in views])
  u = np.array([v.point2d for v in views])
  A = np.concatenate([P[:, 0] - u[:, :1] * P[:, 2], P[:, 1] - u[:, 1:] * P[:, 2]], axis=0)
  A = A / np.linalg.norm(A, axis=1, keepdims=True)
  if is_degenerate(A, nullity=1):
    return None
  X = null_vector(A)
  if abs(X[3]) <= 1e-12 * np.linalg.norm(X):
    return None
  X = X[:3] / X[3]
  return X


def _eight_point(corrs):
  un, T1 = hartley_normalize(corrs[:, :2])
  vn, T2 = hartley_normalize(corrs[:, 2:])
  A = _epipolar_rows(np.concatenate([un, vn], axis=1))
  if is_degenerate(A, nullity=1 if A.shape[0] >= 9 else 0):
    return None
  Fn, _ = rank2_project(null_vector(A).reshape(3, 3), rescale=False)
  F, rescaled = rank2_project(T2.T @ Fn @ T1)
  if not rescaled:
    return None
  return F.ravel()[:8]


def minimal_solve(family, subset):
  """Candidate models through a minimal subset; [] for degenerate subsets."""
  if family.tag == "regression":
    rows = np.asarray(subset, dtype=np.float64)
    A, b = rows[:, :-1], rows[:, -1]
    if A.shape[0] != A.shape[1] or is_degenerate(A):
      return []
    return [np.linalg.solve(A, b)]
  if family.tag == "homography":
    H = _dlt_homography(as_correspondence_array(subset))
    return [] if H is None else [H]
  if family.tag == "triangulation":
    X = _dlt_triangulation(as_views(subset))
    return [] if X is None else [X]
  if family.tag == "fundamental":
    f = _eight_point(as_correspondence_array(subset))
    return [] if f is None else [f]
  raise ValueError("unknown model family '{}'".format(family.tag))


def least_squares_fit(family, subset):
  """Algebraic least squares on all given data; None when the design is rank deficient."""
  n = len(subset)
  if n < family.sample_size:
    return None
  if family.tag == "regression":
    rows = np.asarray(subset, dtype=np.float64)
    A, b = rows[:, :-1], rows[:, -1]
    if is_degenerate(A):
      return None
    return np.linalg.lstsq(A, b, rcond=None)[0]
  if family.tag == "homography":
    return _dlt_homography(as_correspondence_array(subset))
  if family.tag == "triangulation":
    return _dlt_triangulation(as_views(subset))
  if family.tag == "fundamental":
    return _eight_point(as_correspondence_array(subset))
  raise ValueError("unknown model family '{}'".format(family.tag))


# problems

@dataclass
class FittingProblem:
  """An instance together with the data its solvers work on.

  `data` is in the instance's working frame: regression rows, pixel
  correspondences for homographies, views for triangulation and normalized
  correspondences for fundamental matrices (`transforms` then holds T1, T2).
  `raw` keeps the data as supplied.
  """
  family: ModelFamily
  instance: ConsensusInstance
  data: object
  raw: object
  transforms: tuple = None

  def subset(self, index):
    return take(self.data, index)


def make_problem(tag, raw, epsilon=None, dimension=None, transforms=None, domain_margin=None):
  eps = DEFAULT_EPSILON[tag] if epsilon is None else float(epsilon)
  if tag == "regression":
    rows = np.asarray(raw, dtype=np.float64)
    family = get_family(tag, rows.shape[1] - 1 if dimension is None else dimension)
    if rows.shape[1] - 1 != family.dimension:
      raise ValueError("regression rows have dimension {}, expected {}".format(
        rows.shape[1] - 1, family.dimension))
    inst = build_regression_instance(rows, eps, domain_margin)
    return FittingProblem(family, inst, rows, rows)
  family = get_family(tag)
  if tag == "homography":
    corrs = as_correspondence_array(raw)
    return FittingProblem(family, build_homography_instance(corrs, eps, domain_margin), corrs, corrs)
  if tag == "triangulation":
    views = as_views(raw)
    return FittingProblem(family, build_triangulation_instance(views, eps, domain_margin), views, views)
  if tag == "fundamental":
    corrs = as_correspondence_array(raw)
    inst = build_fundamental_instance(corrs, eps, domain_margin, transforms)
    normalized, T = normalize_correspondences(corrs, transforms)
    return FittingProblem(family, inst, normalized, corrs, T)
  raise ValueError("unknown model family '{}'".format(tag))


def report_model(problem, x):
  """Model in natural form for output records."""
  family = problem.family
  x = np.asarray(x, dtype=np.float64)
  if family.tag == "regression":
    return {"x": x.tolist()}
  if family.tag == "homography":
    return {"H": to_matrix(family, x).tolist()}
  if family.tag == "triangulation":
    return {"X": x.tolist(),
            "in_front": bool(np.all(in_domain(problem.instance, x)))}
  Fn, _ = rank2_project(to_matrix(family, x))
  T1, T2 = problem.transforms
  F, _ = rank2_project(T2.T @ Fn @ T1)
  return {"F_normalized": Fn.tolist(), "F": F.tolist(), "epsilon_frame": "normalized"}


def instance_transforms(inst):
  """(T1, T2) recorded by build_fundamental_instance, else None."""
  if "T1" not in inst.meta:
    return None
  return np.asarray(inst.meta["T1"]), np.asarray(inst.meta["T2"])
