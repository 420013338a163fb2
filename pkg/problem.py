"""Consensus maximization problems built from quasiconvex residuals.

Every datum i carries a residual of the form

    r_i(x) = ||M_i [x; 1]||_2 / (c_i . [x; 1])

defined where the denominator is at least the domain margin mu. A datum is an
inlier of x when its shifted residual ||M_i [x;1]|| - eps * c_i . [x;1] is
nonpositive and x lies in its domain.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from commons import homogenize

logger = logging.getLogger(__name__)

DEFAULT_MARGIN_FACTOR = 1e-6


class DomainError(ValueError):
  """The parameter vector lies outside the residual's domain."""


def _frozen(a):
  a = np.array(a, dtype=np.float64)
  a.setflags(write=False)
  return a


@dataclass(frozen=True)
class ResidualFunctional:
  numerator: np.ndarray
  denominator: np.ndarray

  def __post_init__(self):
    numerator = np.atleast_2d(np.asarray(self.numerator, dtype=np.float64))
    denominator = np.asarray(self.denominator, dtype=np.float64).ravel()
    if numerator.shape[1] != denominator.shape[0]:
      raise ValueError("numerator has {} columns but denominator has {} entries".format(
        numerator.shape[1], denominator.shape[0]))
    if denominator.shape[0] < 2:
      raise ValueError("parameter dimension must be at least 1")
    if not (np.all(np.isfinite(numerator)) and np.all(np.isfinite(denominator))):
      raise ValueError("residual functional entries must be finite")
    object.__setattr__(self, "numerator", _frozen(numerator))
    object.__setattr__(self, "denominator", _frozen(denominator))

  @property
  def dimension(self):
    return self.denominator.shape[0] - 1

  def evaluate(self, x):
    xh = homogenize(x)
    return np.linalg.norm(self.numerator @ xh), float(self.denominator @ xh)


class ConsensusInstance:
  """N residual functionals sharing a parameter dimension and numerator height.

  Numerators are stored stacked as an (N, m, d+1) array and denominators as an
  (N, d+1) array. Instances are immutable; `with_margin` returns a copy.
  """

  def __init__(self, numerators, denominators, epsilon, domain_margin=None, meta=None):
    numerators = np.asarray(numerators, dtype=np.float64)
    denominators = np.asarray(denominators, dtype=np.float64)
    if numerators.ndim == 2:
      numerators = numerators[:, None, :]
    if numerators.ndim != 3 or denominators.ndim != 2:
      raise ValueError("expected numerators (N, m, d+1) and denominators (N, d+1)")
    if numerators.shape[0] < 1:
      raise ValueError("an instance needs at least one datum")
    if numerators.shape[0] != denominators.shape[0] or numerators.shape[2] != denominators.shape[1]:
      raise ValueError("numerator shape {} does not match denominator shape {}".format(
        numerators.shape, denominators.shape))
    if denominators.shape[1] < 2:
      raise ValueError("parameter dimension must be at least 1")
    if not (np.all(np.isfinite(numerators)) and np.all(np.isfinite(denominators))):
      raise ValueError("residual functional entries must be finite")
    epsilon = float(epsilon)
    if not epsilon >= 0:
      raise ValueError("epsilon must be nonnegative, got {}".format(epsilon))
    if domain_margin is None:
      domain_margin = default_margin(denominators)
    domain_margin = float(domain_margin)
    if not domain_margin > 0:
      raise ValueError("domain margin must be positive, got {}".format(domain_margin))

    self.numerators = _frozen(numerators)
    self.denominators = _frozen(denominators)
    self.epsilon = epsilon
    self.domain_margin = domain_margin
    self.meta = dict(meta or {})

  @classmethod
  def from_functionals(cls, functionals, epsilon, domain_margin=None, meta=None):
    functionals = list(functionals)
    if not functionals:
      raise ValueError("an instance needs at least one datum")
    dims = {f.dimension for f in functionals}
    heights = {f.numerator.shape[0] for f in functionals}
    if len(dims) != 1:
      raise ValueError("functionals disagree on the parameter dimension: {}".format(sorted(dims)))
    if len(heights) != 1:
      raise ValueError("functionals disagree on the numerator height: {}".format(sorted(heights)))
    return cls(np.stack([f.numerator for f in functionals]),
               np.stack([f.denominator for f in functionals]),
               epsilon, domain_margin, meta)

  @property
  def size(self):
    return self.numerators.shape[0]

  @property
  def dimension(self):
    return self.numerators.shape[2] - 1

  @property
  def height(self):
    return self.numerators.shape[1]

  @property
  def functionals(self):
    return [ResidualFunctional(M, c) for M, c in zip(self.numerators, self.denominators)]

  def with_margin(self, domain_margin):
    return ConsensusInstance(self.numerators, self.denominators, self.epsilon,
                             domain_margin, self.meta)

  def __len__(self):
    return self.size

  def __repr__(self):
    return "ConsensusInstance(N={}, d={}, m={}, epsilon={}, domain_margin={:.3g})".format(
      self.size, self.dimension, self.height, self.epsilon, self.domain_margin)


@dataclass(frozen=True)
class Estimate:
  x: np.ndarray
  consensus: int
  inlier_mask: np.ndarray = field(repr=False)

  def __post_init__(self):
    mask = np.asarray(self.inlier_mask, dtype=bool)
    if int(mask.sum()) != int(self.consensus):
      raise ValueError("consensus {} disagrees with the inlier mask ({} inliers)".format(
        self.consensus, int(mask.sum())))
    object.__setattr__(self, "x", _frozen(self.x))
    object.__setattr__(self, "inlier_mask", mask)
    object.__setattr__(self, "consensus", int(self.consensus))


def default_margin(denominators):
  """Margin from the constant column of the denominators, 1e-6 when degenerate."""
  scale = np.median(np.abs(np.asarray(denominators)[:, -1]))
  margin = DEFAULT_MARGIN_FACTOR * scale
  return margin if margin > 0 else DEFAULT_MARGIN_FACTOR


def _check_index(inst, i):
  if not 0 <= i < inst.size:
    raise IndexError("datum index {} out of range for N={}".format(i, inst.size))


def denominators(inst, x):
  return inst.denominators @ homogenize(x)


def numerator_norms(inst, x):
  return np.linalg.norm(inst.numerators @ homogenize(x), axis=1)


def in_domain(inst, x):
  return denominators(inst, x) >= inst.domain_margin


def residual(inst, i, x):
  _check_index(inst, i)
  q, p = ResidualFunctional(inst.numerators[i], inst.denominators[i]).evaluate(x)
  if p < inst.domain_margin:
    raise DomainError("datum {}: denominator {:.3g} below the domain margin {:.3g}".format(
      i, p, inst.domain_margin))
  return q / p


def residuals(inst, x):
  """All residuals at once; data outside their domain get +inf."""
  q = numerator_norms(inst, x)
  p = denominators(inst, x)
  out = np.full(inst.size, np.inf)
  ok = p >= inst.domain_margin
  out[ok] = q[ok] / p[ok]
  return out


def shifted_residual(inst, i, x, epsilon=None):
  _check_index(inst, i)
  eps = inst.epsilon if epsilon is None else epsilon
  q, p = ResidualFunctional(inst.numerators[i], inst.denominators[i]).evaluate(x)
  return q - eps * p


def shifted_residuals(inst, x, epsilon=None):
  eps = inst.epsilon if epsilon is None else epsilon
  return numerator_norms(inst, x) - eps * denominators(inst, x)


def consensus(inst, x):
  x = np.asarray(x, dtype=np.float64).ravel()
  if x.shape[0] != inst.dimension:
    raise ValueError("expected a parameter vector of length {}, got {}".format(
      inst.dimension, x.shape[0]))
  q = numerator_norms(inst, x)
  p = denominators(inst, x)
  mask = (q - inst.epsilon * p <= 0) & (p >= inst.domain_margin)
  return Estimate(x, int(mask.sum()), mask)


def calibrate_margin(inst, x):
  """Instance whose margin is 1e-6 times the median |p_i(x)| at an initial estimate."""
  scale = np.median(np.abs(denominators(inst, x)))
  margin = DEFAULT_MARGIN_FACTOR * scale
  if not margin > 0:
    logger.warning("denominators vanish at the initial estimate, keeping margin %.3g",
                   inst.domain_margin)
    return inst
  return inst.with_margin(margin)
