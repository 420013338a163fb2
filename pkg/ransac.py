import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from commons import take
from models import least_squares_fit, minimal_solve
from problem import consensus, in_domain

logger = logging.getLogger(__name__)


@dataclass
class RansacConfig:
  confidence: float = 0.99
  max_iterations: int = 100000
  seed: int = 0
  # enumerate every subset instead of sampling (small problems only)
  exhaustive: bool = False

  def __post_init__(self):
    if not 0 < self.confidence < 1:
      raise ValueError("confidence must lie in (0, 1), got {}".format(self.confidence))
    if self.max_iterations < 1:
      raise ValueError("max_iterations must be positive")


@dataclass
class RansacResult:
  estimate: object
  iterations: int
  polished: bool
  degenerate: bool


def required_iterations(inlier_ratio, sample_size, confidence):
  """Samples needed to draw one all-inlier subset with the given confidence."""
  if inlier_ratio >= 1:
    return 1
  p_good = inlier_ratio ** sample_size
  if p_good <= 0:
    return math.inf
  denom = math.log1p(-p_good)
  if denom == 0:
    return math.inf
  return max(1, math.ceil(math.log(1. - confidence) / denom))


def _subsets(rng, n, k, cfg):
  if cfg.exhaustive:
    for comb in itertools.combinations(range(n), k):
      yield np.asarray(comb)
    return
  while True:
    yield rng.choice(n, size=k, replace=False)


def run_ransac(inst, family, data, cfg=None):
  cfg = cfg or RansacConfig()
  n, k = inst.size, family.sample_size
  if n < k:
    raise ValueError("{} data are fewer than the minimal sample of {}".format(n, k))
  rng = np.random.default_rng(cfg.seed)
  best = None
  bound = cfg.max_iterations
  iterations = 0

  for idx in _subsets(rng, n, k, cfg):
    if not cfg.exhaustive and iterations >= bound:
      break
    iterations += 1
    for x in minimal_solve(family, take(data, idx)):
      est = consensus(inst, x)
      if best is None or est.consensus > best.consensus:
        best = est
        if not cfg.exhaustive:
          need = required_iterations(best.consensus / n, k, cfg.confidence)
          bound = min(cfg.max_iterations, need)
    if cfg.exhaustive and iterations >= cfg.max_iterations:
      break

  if best is None:
    logger.warning("all %d sampled subsets were degenerate", iterations)
    return RansacResult(consensus(inst, np.zeros(inst.dimension)), iterations, False, True)

  polished = False
  if best.consensus >= k:
    x_ls = least_squares_fit(family, take(data, best.inlier_mask))
    if x_ls is not None:
      est = consensus(inst, x_ls)
      if est.consensus >= best.consensus:
        best, polished = est, True
  logger.info("ransac: consensus %d after %d samples (polished=%s)", best.consensus,
              iterations, polished)
  return RansacResult(best, iterations, polished, False)


def random_init(inst, family, data, seed=0, max_draws=1000):
  """Random starting point: standard normal for regression, a random minimal fit otherwise."""
  rng = np.random.default_rng(seed)
  if family.tag == "regression":
    return rng.standard_normal(inst.dimension)
  fallback = None
  for _ in range(max_draws):
    idx = rng.choice(inst.size, size=family.sample_size, replace=False)
    for x in minimal_solve(family, take(data, idx)):
      inside = in_domain(inst, x)
      if np.all(inside):
        return x
      if fallback is None or inside.sum() > fallback[0]:
        fallback = (inside.sum(), x)
  if fallback is not None:
    logger.warning("no random minimal fit lies in the full domain, using one with %d of %d",
                   fallback[0], inst.size)
    return fallback[1]
  logger.warning("no non-degenerate minimal subset found, starting from zeros")
  return np.zeros(inst.dimension)
