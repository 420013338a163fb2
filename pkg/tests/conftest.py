import itertools

import numpy as np
import pytest

from models import build_regression_instance


def regression_1d(b, epsilon=0.3):
  """Instance with residuals |x - b_i|."""
  b = np.asarray(b, dtype=np.float64)
  return build_regression_instance(np.stack([np.ones_like(b), b], axis=1), epsilon)


def pair_vertex_optimum(rows, epsilon):
  """Global maximum consensus of a 2D regression instance.

  Some maximizer lies where two slab boundaries a_i.x - b_i = +-eps and
  a_j.x - b_j = +-eps meet, so enumerating those vertices is exact.
  """
  A, b = rows[:, :-1], rows[:, -1]
  best = 0
  for i, j in itertools.combinations(range(len(b)), 2):
    M = A[[i, j]]
    if abs(np.linalg.det(M)) < 1e-12:
      continue
    for si, sj in itertools.product((-1., 1.), repeat=2):
      x = np.linalg.solve(M, [b[i] + si * epsilon, b[j] + sj * epsilon])
      count = int(np.sum(np.abs(A @ x - b) <= epsilon + 1e-9))
      best = max(best, count)
  return best


@pytest.fixture
def toy_instance():
  return regression_1d([0., 0.1, 5.])


@pytest.fixture
def rng():
  return np.random.default_rng(1234)
