"""Bisection over the target consensus with BCO as the feasibility test."""
import logging
from dataclasses import dataclass, field

import numpy as np

from bco import run_bco
from problem import consensus

logger = logging.getLogger(__name__)


@dataclass
class BisectionStep:
  delta_l: int
  delta_h: int
  delta: int
  achieved: int
  objective: float
  converged_to_zero: bool
  solver_failed: bool
  bco_iterations: int
  bco_trace: list = field(default_factory=list, repr=False)

  def to_dict(self, with_bco=True):
    out = {k: v for k, v in self.__dict__.items() if k != "bco_trace"}
    if with_bco:
      out["bco_trace"] = list(self.bco_trace)
    return out


@dataclass
class BisectionTrace:
  steps: list
  best: object
  initial_consensus: int = 0

  @property
  def solver_failed(self):
    return any(s.solver_failed for s in self.steps)


def run_ibco(inst, x0, post_step=None, limits=None):
  """Raise the consensus of x0 by bisection; the incumbent is only replaced by a strictly better x."""
  incumbent = consensus(inst, np.asarray(x0, dtype=np.float64))
  initial = incumbent.consensus
  delta_l, delta_h = incumbent.consensus, inst.size
  steps = []

  while delta_h > delta_l + 1:
    delta = (delta_l + delta_h) // 2
    result = run_bco(inst, incumbent.x, delta, limits)
    x_hat = result.state.x
    if post_step is not None:
      x_hat = post_step(x_hat)
    achieved = consensus(inst, x_hat)

    before = (delta_l, delta_h)
    if achieved.consensus > incumbent.consensus:
      incumbent = achieved
      delta_l = achieved.consensus
    if achieved.consensus < delta:
      delta_h = delta
    if delta_l >= delta_h:
      # BCO reached past a bound that an earlier, non-global test had set
      delta_h = delta_l + 1

    steps.append(BisectionStep(before[0], before[1], delta, achieved.consensus,
                               result.state.objective, result.converged_to_zero,
                               result.solver_failed, result.iterations, result.trace))
    logger.info("delta %d: achieved %d, bounds [%d, %d] -> [%d, %d]", delta,
                achieved.consensus, before[0], before[1], delta_l, delta_h)

  return incumbent, BisectionTrace(steps, incumbent, initial)
