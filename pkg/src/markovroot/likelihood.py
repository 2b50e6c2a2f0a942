"""Multinomial log-likelihood of interval counts as a function of the
single-cycle matrix, with its analytic gradient in Theta."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConstraintMask, CountMatrix, ThetaParam, complete_rows, fill_theta

LOG_FLOOR = 1e-300


class GradientUndefinedError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class LikelihoodContext:
    counts: CountMatrix
    T: int
    mask: ConstraintMask

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ValueError("T must be a positive integer")
        object.__setattr__(self, "T", int(self.T))
        if self.mask.s != self.counts.s:
            raise ValueError("counts and mask disagree on the number of states")

    @property
    def s(self) -> int:
        return self.counts.s

    @property
    def n(self) -> np.ndarray:
        return self.counts.counts


def _theta_array(theta, ctx: LikelihoodContext) -> np.ndarray:
    if isinstance(theta, ThetaParam):
        return theta.theta
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 1:
        return fill_theta(theta, ctx.mask)
    return theta


def power_table(p: np.ndarray, t: int) -> np.ndarray:
    """Stack of P^0 .. P^t, shape (t+1, s, s)."""
    s = p.shape[0]
    out = np.empty((t + 1, s, s))
    out[0] = np.eye(s)
    for k in range(1, t + 1):
        out[k] = out[k - 1] @ p
    return out


def _loglik_from_power(n: np.ndarray, q: np.ndarray) -> float:
    pos = n > 0
    qp = q[pos]
    if np.any(qp < LOG_FLOOR):
        return -np.inf
    return float(np.dot(n[pos], np.log(qp)))


def log_likelihood(ctx: LikelihoodContext, theta) -> float:
    """sum_ij n_ij log (P^T)_ij; -inf when a count meets a nonpositive
    probability. Zero counts contribute nothing."""
    p = complete_rows(_theta_array(theta, ctx))
    q = np.linalg.matrix_power(p, ctx.T)
    return _loglik_from_power(ctx.n, q)


def d_power_d_theta(p, t: int, u: int, v: int, table: np.ndarray | None = None) -> np.ndarray:
    """Derivative of P^t with respect to theta_uv (0-based u, v < s-1).

    Entry (i, j) is sum_k (P^{k-1})_{iu} [(P^{t-k})_{vj} - (P^{t-k})_{sj}],
    i.e. the elementwise form of sum_k P^{k-1} (dP/dtheta_uv) P^{t-k}.
    """
    p = getattr(p, "p", p)
    p = np.asarray(p, dtype=float)
    s = p.shape[0]
    if not (0 <= u < s and 0 <= v < s - 1):
        raise IndexError("u must be < s and v < s-1")
    pw = power_table(p, t - 1) if table is None else table
    out = np.zeros((s, s))
    for k in range(1, t + 1):
        left = pw[k - 1][:, u]
        right = pw[t - k][v, :] - pw[t - k][s - 1, :]
        out += np.outer(left, right)
    return out


def _grad_wrt_p(n: np.ndarray, pw: np.ndarray, q: np.ndarray) -> np.ndarray:
    """dl/dP treating every entry of P as free: sum_k (P^{k-1})' Z (P^{T-k})'."""
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(n > 0, n / q, 0.0)
    return np.einsum("kai,ab,kjb->ij", pw, z, pw[::-1])


def gradient(ctx: LikelihoodContext, theta) -> np.ndarray:
    """Analytic gradient in Theta (s x (s-1)); fixed entries are zero."""
    p = complete_rows(_theta_array(theta, ctx))
    pw = power_table(p, ctx.T - 1)
    q = pw[-1] @ p
    n = ctx.n
    if np.any(q[n > 0] < LOG_FLOOR):
        raise GradientUndefinedError("gradient undefined at boundary: positive count on a zero probability")
    gp = _grad_wrt_p(n, pw, q)
    g = gp[:, :-1] - gp[:, -1:]
    if not np.all(np.isfinite(g)):
        raise GradientUndefinedError("gradient undefined at boundary")
    g[~ctx.mask.free] = 0.0
    return g


def gradient_via_power_derivatives(ctx: LikelihoodContext, theta) -> np.ndarray:
    """Gradient assembled entry by entry from d_power_d_theta. Slow; used as
    a cross-check of the adjoint form in ``gradient``."""
    p = complete_rows(_theta_array(theta, ctx))
    s, t = ctx.s, ctx.T
    pw = power_table(p, t)
    q = pw[t]
    n = ctx.n.astype(float)
    w = np.zeros((s, s - 1))
    for i in range(s):
        for j in range(s - 1):
            a = n[i, j] / q[i, j] if n[i, j] > 0 else 0.0
            b = n[i, s - 1] / q[i, s - 1] if n[i, s - 1] > 0 else 0.0
            w[i, j] = a - b
    g = np.zeros((s, s - 1))
    for u in range(s):
        for v in range(s - 1):
            if not ctx.mask.free[u, v]:
                continue
            d = d_power_d_theta(p, t, u, v, pw)
            g[u, v] = np.sum(w * d[:, : s - 1])
    return g


def loglik_and_gradient(ctx: LikelihoodContext, theta) -> tuple[float, np.ndarray | None]:
    """Value and gradient sharing one power table; gradient None when the
    value is -inf."""
    p = complete_rows(_theta_array(theta, ctx))
    pw = power_table(p, ctx.T - 1)
    q = pw[-1] @ p
    n = ctx.n
    val = _loglik_from_power(n, q)
    if not np.isfinite(val):
        return val, None
    gp = _grad_wrt_p(n, pw, q)
    g = gp[:, :-1] - gp[:, -1:]
    g[~ctx.mask.free] = 0.0
    return val, g


def finite_difference_gradient(ctx: LikelihoodContext, theta, step: float = 1e-6) -> np.ndarray:
    """Central differences of log_likelihood over the free entries."""
    th = np.array(_theta_array(theta, ctx), dtype=float)
    g = np.zeros_like(th)
    for u, v in zip(*np.nonzero(ctx.mask.free)):
        up, dn = th.copy(), th.copy()
        up[u, v] += step
        dn[u, v] -= step
        g[u, v] = (log_likelihood(ctx, up) - log_likelihood(ctx, dn)) / (2 * step)
    return g
