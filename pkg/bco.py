import logging
from dataclasses import dataclass, field

import numpy as np

from problem import consensus
from subproblems import (
  BiconvexState,
  SocpSettings,
  assignment_objective,
  init_slacks,
  x_s_step,
  y_step,
)

logger = logging.getLogger(__name__)


@dataclass
class BcoLimits:
  max_cycles: int = 200
  decrease_tol: float = 1e-9
  zero_tol: float = 1e-9
  # an x-s step may exceed the preceding y-step objective by at most this much
  descent_tol: float = 1e-8
  solver: SocpSettings = field(default_factory=SocpSettings)

  @classmethod
  def from_hparams(cls, bco=None, solver=None):
    bco = dict(bco.items()) if bco is not None else {}
    solver = dict(solver.items()) if solver is not None else {}
    return cls(solver=SocpSettings(**solver), **bco)


@dataclass
class BcoResult:
  state: BiconvexState
  iterations: int
  converged_to_zero: bool
  solver_failed: bool = False
  trace: list = field(default_factory=list)


def run_bco(inst, x0, delta, limits=None):
  """Alternate the assignment step and the (x, s) step from x0 for target delta."""
  limits = limits or BcoLimits()
  x = np.asarray(x0, dtype=np.float64)
  slacks = init_slacks(inst, x)
  state = None
  trace = []
  solver_failed = False
  previous = np.inf
  cycle = 0

  for cycle in range(1, limits.max_cycles + 1):
    y = y_step(slacks, delta)
    state = BiconvexState(x, slacks, y)
    trace.append({"cycle": cycle, "step": "y", "objective": state.objective,
                  "consensus": consensus(inst, x).consensus})
    if state.objective <= limits.zero_tol:
      break

    sol = x_s_step(inst, y, x, settings=limits.solver)
    if not sol.optimal:
      solver_failed = True
    objective = assignment_objective(y, sol.slacks)
    if objective > state.objective + limits.descent_tol:
      logger.debug("cycle %d: x-s step raised the objective %.6g -> %.6g, keeping previous state",
                   cycle, state.objective, objective)
      break
    x, slacks = sol.x, sol.slacks
    state = BiconvexState(x, slacks, y, objective)
    trace.append({"cycle": cycle, "step": "xs", "objective": objective,
                  "consensus": consensus(inst, x).consensus})
    logger.debug("cycle %d: objective %.6g", cycle, objective)
    if objective <= limits.zero_tol:
      break
    if previous - objective < limits.decrease_tol * previous:
      break
    previous = objective

  converged = state.objective <= limits.zero_tol
  return BcoResult(state, cycle, converged, solver_failed, trace)
