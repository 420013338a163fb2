"""The two alternating steps of the biconvex reformulation.

With slacks s_i >= max(0, r'_i(x)) and assignment weights y_i in [0, 1], the
program  min sum_i y_i s_i  s.t.  sum_i y_i >= delta  is solved blockwise:
for fixed slacks the assignment has a closed form (the delta smallest slacks),
for a fixed assignment the (x, s) block is a second-order cone program in
which only the assigned data keep a slack variable.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

import socp
from problem import denominators, numerator_norms, shifted_residuals

logger = logging.getLogger(__name__)


class InvalidTargetError(ValueError):
  """Target consensus outside [1, N]."""


@dataclass
class BiconvexState:
  x: np.ndarray
  slacks: np.ndarray
  assignment: np.ndarray
  objective: float = field(default=None)

  def __post_init__(self):
    self.x = np.asarray(self.x, dtype=np.float64)
    self.slacks = np.asarray(self.slacks, dtype=np.float64)
    self.assignment = np.asarray(self.assignment, dtype=np.float64)
    if self.objective is None:
      self.objective = float(self.assignment @ self.slacks)


@dataclass
class SocpSolution:
  x: np.ndarray
  slacks: np.ndarray
  status: str
  kkt_residual: float
  iterations: int = 0
  refined: bool = False

  @property
  def optimal(self):
    return self.status == socp.OPTIMAL


@dataclass
class SocpSettings:
  tol: float = 1e-8
  max_iters: int = 100
  # radius of the trust ball around the warm start, relative to max(1, ||x_warm||)
  bound_scale: float = 1e3
  # the cone constraints use eps * (1 - threshold_shrink)
  threshold_shrink: float = 1e-6
  # second pass that keeps the assigned objective and pulls the rest in
  refine: bool = True
  refine_slack: float = 1e-9


def init_slacks(inst, x0):
  return np.maximum(0., shifted_residuals(inst, x0))


def y_step(slacks, delta):
  slacks = np.asarray(slacks, dtype=np.float64)
  n = slacks.shape[0]
  if not 1 <= delta <= n:
    raise InvalidTargetError("target consensus {} outside [1, {}]".format(delta, n))
  order = np.argsort(slacks, kind="stable")
  y = np.zeros(n)
  y[order[:int(delta)]] = 1.
  return y


def assignment_objective(assignment, slacks):
  return float(np.asarray(assignment) @ np.asarray(slacks))


class _ProgramBuilder:
  """Collects orthant rows and cone blocks of  G z + s = h  over z = (x, t)."""

  def __init__(self, n):
    self.n = n
    self.lin_G, self.lin_h = [], []
    self.soc_G, self.soc_h, self.soc_sizes = [], [], []

  def linear(self, G, h):
    self.lin_G.append(np.atleast_2d(G))
    self.lin_h.append(np.atleast_1d(h))

  def cone(self, G, h):
    self.soc_G.append(G)
    self.soc_h.append(h)
    self.soc_sizes.append(G.shape[0])

  def build(self):
    G = np.concatenate(self.lin_G + self.soc_G, axis=0)
    h = np.concatenate(self.lin_h + self.soc_h)
    l = sum(g.shape[0] for g in self.lin_G)
    return G, h, {"l": l, "q": list(self.soc_sizes)}


def _domain_rows(inst):
  C = inst.denominators
  d = inst.dimension
  rows = C[np.any(C[:, :d] != 0, axis=1)]
  if rows.shape[0] == 0:
    return rows
  return np.unique(rows, axis=0)


def _build_program(inst, slack_index, x_warm, eps, settings, weights, bound=None):
  """Cone program over z = (x, t_k for k in slack_index).

  eps is the threshold of each slack (scalar or one per slack); weights gives
  the objective coefficient of each slack variable. When `bound` is set, the
  slacks with weight 0 are limited to sum <= bound.
  """
  d = inst.dimension
  k = len(slack_index)
  eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), (k,))
  n = d + k
  builder = _ProgramBuilder(n)
  M = inst.numerators[slack_index]
  C = inst.denominators[slack_index]
  tcols = d + np.arange(k)

  if inst.height == 1:
    # |a.x| <= eps c.x + t  as two linear rows per datum
    for sign in (1., -1.):
      A = sign * M[:, 0, :] - eps[:, None] * C
      G = np.zeros((k, n))
      G[:, :d] = A[:, :d]
      G[np.arange(k), tcols] = -1.
      builder.linear(G, -A[:, d])
  G = np.zeros((k, n))
  G[np.arange(k), tcols] = -1.
  builder.linear(G, np.zeros(k))

  coupling = None
  if bound is not None:
    G = np.zeros((1, n))
    G[0, tcols[weights == 0]] = 1.
    coupling = sum(g.shape[0] for g in builder.lin_G)
    builder.linear(G, np.array([bound]))

  dom = _domain_rows(inst)
  if dom.shape[0]:
    G = np.zeros((dom.shape[0], n))
    G[:, :d] = -dom[:, :d]
    builder.linear(G, dom[:, d] - 2. * inst.domain_margin)

  if inst.height > 1:
    m = inst.height
    for j in range(k):
      G = np.zeros((m + 1, n))
      G[0, :d] = -eps[j] * C[j, :d]
      G[0, d + j] = -1.
      G[1:, :d] = -M[j, :, :d]
      h = np.concatenate([[eps[j] * C[j, d]], M[j, :, d]])
      builder.cone(G, h)

  radius = settings.bound_scale * max(1., np.linalg.norm(x_warm))
  G = np.zeros((d + 1, n))
  G[1:, :d] = -np.eye(d)
  builder.cone(G, np.concatenate([[radius], -x_warm]))

  G, h, dims = builder.build()
  c = np.concatenate([np.zeros(d), weights])
  dense_rows = [coupling] if coupling is not None else None
  return c, G, h, dims, dense_rows


def _solve(inst, slack_index, x_start, x_warm, eps, settings, weights, bound=None):
  c, G, h, dims, dense_rows = _build_program(inst, slack_index, x_warm, eps, settings,
                                             weights, bound)
  r = (numerator_norms(inst, x_start)[slack_index]
       - eps * denominators(inst, x_start)[slack_index])
  t0 = np.maximum(0., r) + 1.
  if bound is not None:
    # start the bounded slacks just inside  sum t <= bound
    free = weights == 0
    if np.any(free):
      room = max(0., bound - np.maximum(0., r[free]).sum())
      t0[free] = np.maximum(0., r[free]) + room / (2. * free.sum())
  z0 = np.concatenate([x_start, t0])
  res = socp.solve_conic(c, G, h, dims, x0=z0,
                         options={"tol": settings.tol, "maxiters": settings.max_iters},
                         separable=len(slack_index), dense_rows=dense_rows)
  return res


def x_s_step(inst, assignment, x_warm, tol=None, settings=None):
  """Minimize the assigned slack total over x; all slacks are re-evaluated at the result."""
  settings = settings or SocpSettings()
  if tol is not None:
    settings = SocpSettings(**{**settings.__dict__, "tol": tol})
  x_warm = np.asarray(x_warm, dtype=np.float64)
  active = np.flatnonzero(np.asarray(assignment) > 0.5)
  if active.size == 0:
    slacks = init_slacks(inst, x_warm)
    return SocpSolution(x_warm.copy(), slacks, socp.OPTIMAL, 0.)
  eps = inst.epsilon * (1. - settings.threshold_shrink)

  res = _solve(inst, active, x_warm, x_warm, eps, settings, np.ones(active.size))
  d = inst.dimension
  x_hat = res.x[:d]
  slacks = init_slacks(inst, x_hat)
  objective = float(slacks[active].sum())
  if res.status != socp.OPTIMAL:
    logger.warning("x-s step solver returned %s (kkt %.2e after %d iterations)",
                   res.status, res.kkt_residual, res.iterations)
  solution = SocpSolution(x_hat, slacks, res.status, res.kkt_residual, res.iterations)

  inactive = np.flatnonzero(np.asarray(assignment) <= 0.5)
  if not (settings.refine and inactive.size) or res.status != socp.OPTIMAL:
    return solution
  if inst.height > 1 and objective > 0:
    # curved residuals leave a single minimizer when the objective is positive
    return solution

  # second pass: among minimizers of the assigned total, minimize the others.
  # A flat positive optimum is held under the unshrunk threshold so the assigned
  # total cannot rise; a zero optimum keeps the shrunk one for the inlier certificate.
  flat = objective > settings.refine_slack
  eps_active = inst.epsilon if flat else eps
  order = np.concatenate([active, inactive])
  weights = np.concatenate([np.zeros(active.size), np.ones(inactive.size)])
  thresholds = np.concatenate([np.full(active.size, eps_active), np.full(inactive.size, eps)])
  bound = float(np.maximum(0., shifted_residuals(inst, x_hat, eps_active)[active]).sum())
  bound += settings.refine_slack * max(1., bound)
  ref = _solve(inst, order, x_hat, x_warm, thresholds, settings, weights, bound)
  x_ref = ref.x[:d]
  if not np.all(np.isfinite(x_ref)):
    return solution
  slacks_ref = init_slacks(inst, x_ref)
  objective_ref = float(slacks_ref[active].sum())
  p_ok = np.all(denominators(inst, x_ref)[denominators(inst, x_hat) >= inst.domain_margin]
                >= inst.domain_margin)
  slack = max(settings.refine_slack, settings.tol) if flat else settings.refine_slack
  if objective_ref <= objective + slack * max(1., objective) and p_ok:
    logger.debug("refined x-s step: inactive slack %.4g -> %.4g",
                 slacks[inactive].sum(), slacks_ref[inactive].sum())
    return SocpSolution(x_ref, slacks_ref, res.status, res.kkt_residual,
                        res.iterations + ref.iterations, refined=True)
  return solution
