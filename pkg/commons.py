import numpy as np


DEGENERACY_CONDITION = 1e10


def homogenize(x):
  x = np.asarray(x, dtype=np.float64)
  return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)


def dehomogenize(xh):
  xh = np.asarray(xh, dtype=np.float64)
  return xh[..., :-1] / xh[..., -1:]


def hartley_normalize(points):
  """Isotropic normalization: centroid to the origin, mean distance sqrt(2).

  Returns the normalized (N, 2) points and the 3x3 transform T with
  [p';1] = T [p;1].
  """
  points = np.asarray(points, dtype=np.float64)
  centroid = points.mean(axis=0)
  dist = np.linalg.norm(points - centroid, axis=1).mean()
  scale = np.sqrt(2.) / dist if dist > 0 else 1.
  T = np.array([[scale, 0., -scale * centroid[0]],
                [0., scale, -scale * centroid[1]],
                [0., 0., 1.]])
  return apply_transform(T, points), T


def apply_transform(T, points):
  points = np.asarray(points, dtype=np.float64)
  return dehomogenize(homogenize(points) @ T.T)


def condition_number(A, nullity=0):
  """Condition number of A ignoring the `nullity` smallest singular values."""
  s = np.linalg.svd(np.atleast_2d(A), compute_uv=False)
  s = s[:len(s) - nullity] if nullity else s
  if len(s) == 0 or s[-1] <= 0:
    return np.inf
  return s[0] / s[-1]


def is_degenerate(A, nullity=0, threshold=DEGENERACY_CONDITION):
  return not condition_number(A, nullity) <= threshold


def null_vector(A):
  # right singular vector of the smallest singular value
  _, _, vt = np.linalg.svd(np.atleast_2d(A))
  return vt[-1]


def skew(t):
  return np.array([[0., -t[2], t[1]],
                   [t[2], 0., -t[0]],
                   [-t[1], t[0], 0.]])


def spawn_seeds(seed, n):
  """Independent integer seeds derived from one root seed."""
  children = np.random.SeedSequence(seed).spawn(n)
  return [int(c.generate_state(1)[0]) for c in children]


def take(data, index):
  """Row subset of an array or a plain list."""
  index = np.asarray(index)
  if index.dtype == bool:
    index = np.flatnonzero(index)
  if isinstance(data, np.ndarray):
    return data[index]
  return [data[i] for i in index]
