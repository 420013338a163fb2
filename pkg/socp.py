"""Dense primal-dual interior-point solver for linear cone programs.

Solves

    minimize    c'x
    subject to  G x + s = h,   s in K

where K is a product of a nonnegative orthant of dimension dims['l'] followed
by second-order cones of sizes dims['q'] (same convention as CVXOPT). The
method is an infeasible-start Mehrotra predictor-corrector with
Nesterov-Todd scaling. Normal equations are formed densely; when the trailing
`separable` columns touch disjoint sets of cone blocks their Gram block is
diagonal and is eliminated with a Schur complement. Orthant rows listed in
`dense_rows` may couple those columns and are folded back in with a Woodbury
update. Every Newton solve is followed by iterative refinement against the full
linearized system, and steps backtrack to stay strictly inside the cone.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

logger = logging.getLogger(__name__)

DEFAULT_OPTIONS = {
  "maxiters": 100,
  "tol": 1e-8,
  "step": 0.99,
  "expon": 3,
  "minstep": 1e-10,
}

OPTIMAL = "optimal"
MAX_ITERATIONS = "max-iterations"
NUMERICAL_FAILURE = "numerical-failure"


@dataclass
class ConicResult:
  x: np.ndarray
  s: np.ndarray
  z: np.ndarray
  status: str
  kkt_residual: float
  iterations: int
  primal_objective: float


class Cone:
  """Orthant plus second-order cones; blocks of equal size are handled together."""

  def __init__(self, dims):
    self.l = int(dims.get("l", 0))
    self.q = [int(k) for k in dims.get("q", [])]
    if self.l < 0 or any(k < 1 for k in self.q):
      raise ValueError("invalid cone dimensions {}".format(dims))
    self.size = self.l + sum(self.q)
    self.degree = self.l + len(self.q)

    offsets = {}
    start = self.l
    for k in self.q:
      offsets.setdefault(k, []).append(start)
      start += k
    self.groups = []
    for k in sorted(offsets):
      heads = np.asarray(offsets[k])
      self.groups.append((k, heads[:, None] + np.arange(k)[None, :]))

  def identity(self):
    e = np.zeros(self.size)
    e[:self.l] = 1.
    for _, idx in self.groups:
      e[idx[:, 0]] = 1.
    return e

  def product(self, u, v):
    out = np.empty(self.size)
    out[:self.l] = u[:self.l] * v[:self.l]
    for _, idx in self.groups:
      U, V = u[idx], v[idx]
      out[idx[:, 0]] = np.sum(U * V, axis=1)
      out[idx[:, 1:]] = U[:, :1] * V[:, 1:] + V[:, :1] * U[:, 1:]
    return out

  def inv_product(self, lam, v):
    """Solve lam o u = v for u."""
    out = np.empty(self.size)
    out[:self.l] = v[:self.l] / lam[:self.l]
    for _, idx in self.groups:
      L, V = lam[idx], v[idx]
      L0, L1 = L[:, 0], L[:, 1:]
      det = _jnorm_sq(L)
      u0 = (L0 * V[:, 0] - np.sum(L1 * V[:, 1:], axis=1)) / det
      out[idx[:, 0]] = u0
      out[idx[:, 1:]] = (V[:, 1:] - L1 * u0[:, None]) / L0[:, None]
    return out

  def margins(self, u):
    """Per-block distance-like interior measure; positive iff interior."""
    parts = [u[:self.l]]
    for _, idx in self.groups:
      U = u[idx]
      parts.append(U[:, 0] - np.linalg.norm(U[:, 1:], axis=1))
    return np.concatenate(parts)

  def is_interior(self, u):
    return bool(np.all(self.margins(u) > 0))

  def shift_into(self, u, target=1.):
    """Push every block with margin below 1e-6 * target up to `target`."""
    u = np.array(u, dtype=np.float64)
    floor = 1e-6 * target
    orth = u[:self.l]
    bad = orth < floor
    orth[bad] = target
    for _, idx in self.groups:
      U = u[idx]
      m = U[:, 0] - np.linalg.norm(U[:, 1:], axis=1)
      bad = m < floor
      if np.any(bad):
        u[idx[bad, 0]] += target - m[bad]
    return u

  def max_step(self, u, du):
    """Largest alpha with u + alpha du in the cone (inf when unbounded)."""
    alpha = np.inf
    if self.l:
      neg = du[:self.l] < 0
      if np.any(neg):
        alpha = min(alpha, np.min(-u[:self.l][neg] / du[:self.l][neg]))
    for _, idx in self.groups:
      U, D = u[idx], du[idx]
      a = D[:, 0] ** 2 - np.sum(D[:, 1:] ** 2, axis=1)
      b = U[:, 0] * D[:, 0] - np.sum(U[:, 1:] * D[:, 1:], axis=1)
      c = np.maximum(_jnorm_sq(U), 0.)
      disc = b * b - a * c
      with np.errstate(divide="ignore", invalid="ignore"):
        q = -(b + np.copysign(np.sqrt(np.maximum(disc, 0.)), b))
        r1 = q / a
        r2 = c / q
      roots = np.stack([r1, r2], axis=1)
      roots[~np.isfinite(roots) | (roots <= 0)] = np.inf
      roots[disc < 0] = np.inf
      if roots.size:
        alpha = min(alpha, float(np.min(roots)))
    return alpha


def _jnorm_sq(U):
  # u0^2 - ||u1||^2 computed as a product to avoid cancellation
  n1 = np.linalg.norm(U[:, 1:], axis=1)
  return (U[:, 0] - n1) * (U[:, 0] + n1)


class Scaling:
  """Nesterov-Todd scaling W with W z = W^{-1} s = lambda."""

  def __init__(self, cone, s, z):
    self.cone = cone
    if not (cone.is_interior(s) and cone.is_interior(z)):
      raise ValueError("iterates left the cone interior")
    self.d = np.sqrt(s[:cone.l] / z[:cone.l])
    self.blocks = []
    for _, idx in cone.groups:
      S, Z = s[idx], z[idx]
      sj = np.sqrt(_jnorm_sq(S))
      zj = np.sqrt(_jnorm_sq(Z))
      sb = S / sj[:, None]
      zb = Z / zj[:, None]
      gamma = np.sqrt((1. + np.sum(sb * zb, axis=1)) / 2.)
      w0 = (sb[:, 0] + zb[:, 0]) / (2. * gamma)
      w1 = (sb[:, 1:] - zb[:, 1:]) / (2. * gamma[:, None])
      eta = np.sqrt(sj / zj)
      self.blocks.append((idx, w0, w1, eta))

  def apply(self, v, inverse=False):
    """W v (or W^{-1} v) for a vector or a matrix with cone-indexed rows."""
    v = np.asarray(v, dtype=np.float64)
    matrix = v.ndim == 2
    out = np.empty_like(v)
    l = self.cone.l
    d = self.d[:, None] if matrix else self.d
    out[:l] = v[:l] / d if inverse else v[:l] * d
    for idx, w0, w1, eta in self.blocks:
      V = v[idx]
      if not matrix:
        V = V[..., None]
      V0, V1 = V[:, 0, :], V[:, 1:, :]
      dot = np.einsum("bj,bjn->bn", w1, V1)
      if inverse:
        out0 = w0[:, None] * V0 - dot
        coef = -V0 + dot / (1. + w0)[:, None]
        scale = 1. / eta
      else:
        out0 = w0[:, None] * V0 + dot
        coef = V0 + dot / (1. + w0)[:, None]
        scale = eta
      out1 = V1 + w1[:, :, None] * coef[:, None, :]
      out0 = out0 * scale[:, None]
      out1 = out1 * scale[:, None, None]
      if not matrix:
        out0, out1 = out0[..., 0], out1[..., 0]
      out[idx[:, 0]] = out0
      out[idx[:, 1:]] = out1
    return out


def _cholesky(H):
  try:
    return cho_factor(H)
  except LinAlgError:
    pass
  reg = 1e-12 * max(1., float(np.trace(H)) / max(1, H.shape[0]))
  # refinement in NewtonSystem absorbs the perturbation
  for _ in range(5):
    try:
      return cho_factor(H + reg * np.eye(H.shape[0]))
    except LinAlgError:
      reg *= 100.
  raise LinAlgError("normal equations are not positive definite")


class NormalEquations:
  """Factorization of Gs' Gs for the reduced Newton system."""

  def __init__(self, Gs, separable=0, dense_rows=None):
    n = Gs.shape[1]
    self.split = n - separable
    dense_rows = np.asarray(dense_rows if dense_rows is not None else [], dtype=int)
    if dense_rows.size:
      keep = np.ones(Gs.shape[0], dtype=bool)
      keep[dense_rows] = False
      A = Gs[keep]
    else:
      A = Gs

    if separable:
      Ax, At = A[:, :self.split], A[:, self.split:]
      self.Hxt = Ax.T @ At
      htt = np.sum(At * At, axis=0)
      self.htt = np.maximum(htt, 1e-300)
      S = Ax.T @ Ax - (self.Hxt / self.htt) @ self.Hxt.T
      self.factor = _cholesky(S) if self.split else None
    else:
      self.Hxt = None
      self.factor = _cholesky(A.T @ A)

    self.V = None
    if dense_rows.size:
      self.V = Gs[dense_rows]
      self.Y = self._solve0(self.V.T)
      C = np.eye(len(dense_rows)) + self.V @ self.Y
      self.C = _cholesky(C)

  def _solve0(self, r):
    if self.Hxt is None:
      return cho_solve(self.factor, r)
    rx, rt = r[:self.split], r[self.split:]
    htt = self.htt if r.ndim == 1 else self.htt[:, None]
    if self.split:
      dx = cho_solve(self.factor, rx - self.Hxt @ (rt / htt))
    else:
      dx = rx
    dt = (rt - self.Hxt.T @ dx) / htt
    return np.concatenate([dx, dt], axis=0)

  def solve(self, r):
    y = self._solve0(r)
    if self.V is not None:
      y = y - self.Y @ cho_solve(self.C, self.V @ y)
    return y


class NewtonSystem:
  """Linearized KKT system at the current scaling, with iterative refinement.

  Solves  Gt' dz = bx,  Gt dx + ds = bz,  lam o (W dz + W^{-1} ds) = bs.
  """

  def __init__(self, cone, W, lam, Gt, separable=0, dense_rows=None, refinement=2):
    self.cone = cone
    self.W = W
    self.lam = lam
    self.Gt = Gt
    self.Gs = W.apply(Gt, inverse=True)
    self.factor = NormalEquations(self.Gs, separable, dense_rows)
    self.refinement = refinement

  def _solve_once(self, bx, bz, bs):
    W = self.W
    u = self.cone.inv_product(self.lam, bs)
    wbz = W.apply(bz - W.apply(u), inverse=True)
    dx = self.factor.solve(bx + self.Gs.T @ wbz)
    dz = W.apply(self.Gs @ dx - wbz, inverse=True)
    ds = W.apply(u - W.apply(dz))
    return dx, ds, dz

  def residuals(self, dx, ds, dz, bx, bz, bs):
    W = self.W
    ex = bx - self.Gt.T @ dz
    ez = bz - self.Gt @ dx - ds
    es = bs - self.cone.product(self.lam, W.apply(dz) + W.apply(ds, inverse=True))
    return ex, ez, es

  def solve(self, bx, bz, bs):
    dx, ds, dz = self._solve_once(bx, bz, bs)
    scale = max(1., np.linalg.norm(bx), np.linalg.norm(bz), np.linalg.norm(bs))
    err = _stacked_norm(self.residuals(dx, ds, dz, bx, bz, bs))
    for _ in range(self.refinement):
      if err <= 1e-14 * scale:
        break
      ex, ez, es = self.residuals(dx, ds, dz, bx, bz, bs)
      cx, cs, cz = self._solve_once(ex, ez, es)
      nx, ns, nz = dx + cx, ds + cs, dz + cz
      new_err = _stacked_norm(self.residuals(nx, ns, nz, bx, bz, bs))
      if not new_err < err:
        break
      dx, ds, dz, err = nx, ns, nz, new_err
    if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(ds)) and np.all(np.isfinite(dz))):
      raise FloatingPointError("Newton direction is not finite")
    return dx, ds, dz

  def max_step(self, ds, dz):
    # s + a ds stays in K iff lam + a W^{-1} ds does, and likewise for z with W dz
    return min(self.cone.max_step(self.lam, self.W.apply(ds, inverse=True)),
               self.cone.max_step(self.lam, self.W.apply(dz)))


def _stacked_norm(parts):
  return float(np.sqrt(sum(np.dot(p, p) for p in parts)))


def _interior_step(cone, s, z, ds, dz, alpha, tries=40):
  """Halve alpha until both iterates stay strictly inside the cone; None if they never do."""
  for _ in range(tries):
    s_new, z_new = s + alpha * ds, z + alpha * dz
    if cone.is_interior(s_new) and cone.is_interior(z_new):
      return alpha, s_new, z_new
    alpha *= 0.5
  return None


def solve_conic(c, G, h, dims, x0=None, options=None, separable=0, dense_rows=None):
  opts = dict(DEFAULT_OPTIONS)
  opts.update(options or {})
  c = np.asarray(c, dtype=np.float64)
  G = np.asarray(G, dtype=np.float64)
  h = np.asarray(h, dtype=np.float64)
  cone = Cone(dims)
  n = c.shape[0]
  if G.shape != (cone.size, n) or h.shape != (cone.size,):
    raise ValueError("G must be {}x{} and h of length {}".format(cone.size, n, cone.size))
  if not 0 <= separable < n:
    raise ValueError("invalid separable block of {} columns".format(separable))

  # column equilibration; solve for xt = x / D
  norms = np.linalg.norm(G, axis=0)
  norms[norms == 0] = 1.
  D = 1. / norms
  Gt = G * D
  ct = c * D

  if x0 is not None:
    xt = np.asarray(x0, dtype=np.float64) / D
  else:
    xt = np.linalg.lstsq(Gt, h, rcond=None)[0]
  s = cone.shift_into(h - Gt @ xt)
  z = cone.identity()
  e = cone.identity()

  hnorm = max(1., np.linalg.norm(h))
  cnorm = max(1., np.linalg.norm(c))
  best = None
  status = MAX_ITERATIONS
  it = 0
  for it in range(opts["maxiters"] + 1):
    x = D * xt
    rx = G.T @ z + c
    rz = G @ x + s - h
    gap = float(s @ z)
    pcost = float(c @ x)
    kkt = max(np.linalg.norm(rz) / hnorm, np.linalg.norm(rx) / cnorm,
              gap / max(1., abs(pcost)))
    if not np.isfinite(kkt):
      logger.debug("non-finite iterate at iteration %d", it)
      status = NUMERICAL_FAILURE
      break
    if best is None or kkt < best[0]:
      best = (kkt, x.copy(), s.copy(), z.copy(), pcost, it)
    logger.debug("iter %d: pcost %.6e gap %.2e kkt %.2e", it, pcost, gap, kkt)
    if kkt <= opts["tol"]:
      status = OPTIMAL
      break
    if it == opts["maxiters"]:
      status = MAX_ITERATIONS
      break

    mu = gap / cone.degree
    try:
      with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        step = _mehrotra_step(cone, s, z, Gt, ct, rz, mu, e, opts, separable, dense_rows)
    except (ValueError, LinAlgError, FloatingPointError) as err:
      logger.debug("stopping at iteration %d: %s", it, err)
      status = NUMERICAL_FAILURE
      break
    if step is None:
      logger.debug("no usable step at iteration %d", it)
      status = NUMERICAL_FAILURE
      break
    alpha, dx, s, z = step
    xt = xt + alpha * dx

  kkt, x, s, z, pcost, _ = best
  return ConicResult(x, s, z, status, kkt, it, pcost)


def _mehrotra_step(cone, s, z, Gt, ct, rz, mu, e, opts, separable, dense_rows):
  """Predictor-corrector step; falls back to a pure centering step when it is too short.

  Returns (alpha, dx, s_new, z_new) or None.
  """
  W = Scaling(cone, s, z)
  lam = W.apply(z)
  system = NewtonSystem(cone, W, lam, Gt, separable, dense_rows)
  rxt = Gt.T @ z + ct
  lam_sq = cone.product(lam, lam)

  dx_a, ds_a, dz_a = system.solve(-rxt, -rz, -lam_sq)
  alpha_a = min(1., system.max_step(ds_a, dz_a))
  sigma = (1. - alpha_a) ** opts["expon"]
  corr = cone.product(W.apply(ds_a, inverse=True), W.apply(dz_a))
  candidates = [(sigma, corr), (1., np.zeros_like(corr))]

  for sigma, corr in candidates:
    bs = -lam_sq + sigma * mu * e - corr
    dx, ds, dz = system.solve(-(1. - sigma) * rxt, -(1. - sigma) * rz, bs)
    alpha = min(1., opts["step"] * system.max_step(ds, dz))
    if not np.isfinite(alpha) or alpha < opts["minstep"]:
      logger.debug("step %.3g too short (sigma %.3g)", alpha, sigma)
      continue
    moved = _interior_step(cone, s, z, ds, dz, alpha)
    if moved is None or moved[0] < opts["minstep"]:
      continue
    alpha, s_new, z_new = moved
    return alpha, dx, s_new, z_new
  return None


def kkt_residuals(c, G, h, result):
  """Primal, dual and complementarity residuals of a returned iterate."""
  primal = np.linalg.norm(G @ result.x + result.s - h) / max(1., np.linalg.norm(h))
  dual = np.linalg.norm(G.T @ result.z + c) / max(1., np.linalg.norm(c))
  comp = float(result.s @ result.z) / max(1., abs(float(c @ result.x)))
  return primal, dual, comp
