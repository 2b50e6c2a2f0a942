"""Log-barrier maximisation of the log-likelihood over Theta.

Outer iterations shrink the barrier; each inner iteration is a BFGS ascent
with backtracking. Two barrier schedules are available:

``adaptive``
    The barrier is anchored at the previous outer iterate,
    ``mu * sum(g_old * log(g) - g)`` over constraint slacks ``g``, with ``mu``
    held fixed. Its gradient vanishes at the anchor, so each outer step lets
    the slacks shrink geometrically toward an active boundary.
``geometric``
    Plain ``mu * sum(log(g))`` with ``mu`` divided by ``mu_reduction`` after
    every outer iteration.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ThetaParam, complete_rows, fill_theta
from .likelihood import LOG_FLOOR, LikelihoodContext

ARMIJO = 1e-4
STEP_SHRINK = 0.5


class Status(enum.IntEnum):
    CONVERGED = 0
    FAILED_NONFINITE = 1
    MAX_ITERS = 2


@dataclass(frozen=True)
class OptimizerSettings:
    outer_rel_tol: float = 1e-10
    inner_abs_tol: float = 1e-8
    inner_rel_tol: float = 1e-8
    barrier_mu: float = 1e-4
    max_outer_iters: int = 100
    max_inner_iters: int = 500
    schedule: str = "geometric"
    mu_reduction: float = 10.0

    def __post_init__(self):
        for name in ("outer_rel_tol", "inner_abs_tol", "inner_rel_tol", "barrier_mu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise ValueError("iteration caps must be at least 1")
        if self.schedule not in ("adaptive", "geometric"):
            raise ValueError(f"unknown barrier schedule {self.schedule!r}")
        if not self.mu_reduction > 1:
            raise ValueError("mu_reduction must exceed 1")

    def replace(self, **kw) -> "OptimizerSettings":
        return dataclasses.replace(self, **kw)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in dataclasses.fields(self))

    @classmethod
    def from_text(cls, text: str, base: "OptimizerSettings | None" = None) -> "OptimizerSettings":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kw = {}
        for ln, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"settings line {ln}: expected key = value")
            key, val = (x.strip() for x in line.split("=", 1))
            if key not in types:
                raise ValueError(f"settings line {ln}: unknown key {key!r}")
            kw[key] = {"float": float, "int": int, "str": str}[types[key]](val)
        return (base or cls()).replace(**kw)

    @classmethod
    def from_file(cls, path, base: "OptimizerSettings | None" = None) -> "OptimizerSettings":
        return cls.from_text(Path(path).read_text(), base)


def _tol(outer, inner):
    # R constrOptim conventions: anchored barrier with fixed mu, BFGS capped at 100 iterations
    return OptimizerSettings(outer_rel_tol=outer, inner_abs_tol=inner, inner_rel_tol=inner, schedule="adaptive",
                             max_inner_iters=100)


# per-(study, T) settings: the reported tolerances on a constrOptim-style configuration
PRESETS = {
    ("study1", 6): _tol(1e-11, 1e-9),
    ("study2", 12): _tol(1e-13, 1e-12),
    ("study3", 6): _tol(1e-12, 1e-10),
    **{(f"study{k}", 2): _tol(1e-10, 1e-8) for k in (4, 5, 6, 7, 8)},
    **{(f"study{k}", 24): _tol(1e-11, 1e-9) for k in (4, 5, 6, 7, 8)},
    **{(f"study{k}", 100): _tol(1e-12, 1e-10) for k in (4, 5, 6, 7, 8)},
}


@dataclass(frozen=True, eq=False)
class ConvergenceRecord:
    start_id: int
    theta_final: np.ndarray
    loglik: float
    grad_linf: float
    status: Status
    outer_iters: int

    @property
    def converged(self) -> bool:
        return self.status == Status.CONVERGED

    @property
    def matrix(self) -> np.ndarray:
        return complete_rows(self.theta_final)


class Problem:
    """Free-parameter view of a likelihood context.

    Constraint slacks are ``A @ x + b``: one row per free entry (theta >= 0)
    and one per row with free entries (row remainder >= 0).
    """

    def __init__(self, ctx: LikelihoodContext):
        self.ctx = ctx
        mask = ctx.mask
        self.s = ctx.s
        self.T = ctx.T
        self.free = mask.free
        self.n = ctx.n.astype(float)
        self.pos = ctx.n > 0
        self.n_pos = self.n[self.pos]
        self.base = np.where(self.free, 0.0, mask.fixed)
        self.dim = int(self.free.sum())
        rows, cols = np.nonzero(self.free)
        self.rows = rows
        a, b = [], []
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = 1.0
            a.append(e)
            b.append(0.0)
        for i in range(self.s):
            sel = rows == i
            if sel.any():
                a.append(-sel.astype(float))
                b.append(1.0 - self.base[i].sum())
        self.A = np.array(a, dtype=float).reshape(len(a), self.dim)
        self.b = np.array(b)

    def theta(self, x: np.ndarray) -> np.ndarray:
        th = self.base.copy()
        th[self.free] = x
        return th

    def slacks(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x + self.b

    def loglik(self, x: np.ndarray) -> float:
        p = complete_rows(self.theta(x))
        q = np.linalg.matrix_power(p, self.T)
        qp = q[self.pos]
        if not np.all(qp >= LOG_FLOOR):
            return -np.inf
        return float(self.n_pos @ np.log(qp))

    def loglik_grad(self, x: np.ndarray) -> tuple[float, np.ndarray | None]:
        p = complete_rows(self.theta(x))
        t = self.T
        s = self.s
        pw = np.empty((t, s, s))
        pw[0] = np.eye(s)
        for k in range(1, t):
            pw[k] = pw[k - 1] @ p
        q = pw[-1] @ p
        qp = q[self.pos]
        if not np.all(qp >= LOG_FLOOR):
            return -np.inf, None
        val = float(self.n_pos @ np.log(qp))
        z = np.zeros((s, s))
        z[self.pos] = self.n_pos / qp
        gp = np.einsum("kai,ab,kjb->ij", pw, z, pw[::-1])
        g = gp[:, :-1] - gp[:, -1:]
        return val, g[self.free]


def _barrier_value(g: np.ndarray, mu: float, anchor: np.ndarray | None) -> float:
    if anchor is None:
        return mu * float(np.sum(np.log(g)))
    return mu * float(np.sum(anchor * np.log(g) - g))


def barrier_objective(ctx: LikelihoodContext, theta, mu: float, anchor=None) -> float:
    """Log-likelihood plus ``mu`` times the log-barrier of the constraints
    theta_ij >= 0 and row sums <= 1 over free coordinates.

    With ``anchor`` (a Theta at which the barrier is centred) the adaptive
    form ``mu * sum(g_anchor log g - g)`` is used instead. Returns -inf
    outside the open feasible region.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    prob = Problem(ctx)
    th = theta.theta if isinstance(theta, ThetaParam) else np.asarray(theta, dtype=float)
    x = th[prob.free]
    g = prob.slacks(x)
    if not np.all(g > 0):
        return -np.inf
    ga = None
    if anchor is not None:
        ath = anchor.theta if isinstance(anchor, ThetaParam) else np.asarray(anchor, dtype=float)
        ga = prob.slacks(ath[prob.free])
    ll = prob.loglik(x)
    if not np.isfinite(ll):
        return -np.inf
    return ll + _barrier_value(g, mu, ga)


class _Objective:
    """Negated barrier objective (minimised by the BFGS loop)."""

    def __init__(self, prob: Problem, mu: float, anchor: np.ndarray | None):
        self.prob, self.mu, self.anchor = prob, mu, anchor
        self.nonfinite = False

    def value(self, x):
        g = self.prob.slacks(x)
        if not np.all(g > 0):
            return np.inf
        ll = self.prob.loglik(x)
        if not np.isfinite(ll):
            return np.inf
        return -(ll + _barrier_value(g, self.mu, self.anchor))

    def grad(self, x):
        g = self.prob.slacks(x)
        ll, gl = self.prob.loglik_grad(x)
        if gl is None:
            self.nonfinite = True
            return None
        w = 1.0 / g if self.anchor is None else self.anchor / g - 1.0
        out = -(gl + self.mu * (self.prob.A.T @ w))
        if not np.all(np.isfinite(out)):
            self.nonfinite = True
            return None
        return out


def _bfgs(obj: _Objective, x: np.ndarray, abs_tol: float, rel_tol: float, max_iter: int):
    """Minimise obj from x. Returns (x, f, iterations, ok).

    Convergence is declared only when a small change occurs on a step taken
    with a freshly reset inverse Hessian; a small change after curvature
    updates resets the approximation and tries again.
    """
    n = x.size
    f = obj.value(x)
    if not np.isfinite(f):
        return x, f, 0, False
    g = obj.grad(x)
    if g is None:
        return x, f, 0, False
    h = np.eye(n)
    fresh = True
    since_reset = 0
    it = 0
    while it < max_iter:
        d = -h @ g
        slope = g @ d
        if not slope < 0:
            if fresh:
                break
            h, fresh, since_reset = np.eye(n), True, 0
            continue
        step = 1.0
        xn, fn = x, f
        moved = False
        while True:
            xt = x + step * d
            if np.array_equal(xt, x):
                break
            ft = obj.value(xt)
            if np.isfinite(ft) and ft <= f + ARMIJO * step * slope:
                xn, fn, moved = xt, ft, True
                break
            step *= STEP_SHRINK
        if not moved:
            if fresh:
                break
            h, fresh, since_reset = np.eye(n), True, 0
            continue
        gn = obj.grad(xn)
        if gn is None:
            return xn, fn, it, False
        it += 1
        df = f - fn
        small = df < abs_tol or df / (abs(fn) + abs_tol) < rel_tol
        sx, y = xn - x, gn - g
        x, f, g = xn, fn, gn
        if small:
            if fresh:
                break
            h, fresh, since_reset = np.eye(n), True, 0
            continue
        sy = sx @ y
        since_reset += 1
        if sy > 0 and since_reset <= 2 * n:
            hy = h @ y
            rho = 1.0 / sy
            h = h + ((sy + y @ hy) * rho * rho) * np.outer(sx, sx) - rho * (np.outer(hy, sx) + np.outer(sx, hy))
            fresh = False
        else:
            h, fresh, since_reset = np.eye(n), True, 0
    return x, f, it, True


def maximize(ctx: LikelihoodContext, start, settings: OptimizerSettings = OptimizerSettings(),
             start_id: int = -1, problem: Problem | None = None) -> ConvergenceRecord:
    prob = problem or Problem(ctx)
    th0 = start.theta if isinstance(start, ThetaParam) else np.asarray(start, dtype=float)
    x = np.array(th0[prob.free], dtype=float)

    def record(x, status, outer):
        th = prob.theta(x)
        ll, gl = prob.loglik_grad(x) if x.size else (prob.loglik(x), np.zeros(0))
        if gl is None or not np.isfinite(ll) or not np.all(np.isfinite(gl)):
            status = Status.FAILED_NONFINITE
            gmax = np.inf
        else:
            gmax = float(np.abs(gl).max()) if gl.size else 0.0
        return ConvergenceRecord(start_id, th, float(ll), gmax, status, outer)

    if x.size == 0:
        return record(x, Status.CONVERGED, 0)
    if not np.all(prob.slacks(x) > 0):
        raise ValueError("start is not strictly interior")

    mu = settings.barrier_mu
    adaptive = settings.schedule == "adaptive"
    obj_val = prob.loglik(x)
    if not np.isfinite(obj_val):
        return record(x, Status.FAILED_NONFINITE, 0)
    anchor = prob.slacks(x) if adaptive else None
    r = -_Objective(prob, mu, anchor).value(x)

    for outer in range(1, settings.max_outer_iters + 1):
        anchor = prob.slacks(x) if adaptive else None
        o = _Objective(prob, mu, anchor)
        xn, fn, _, ok = _bfgs(o, x, settings.inner_abs_tol, settings.inner_rel_tol, settings.max_inner_iters)
        if not ok or o.nonfinite or not np.isfinite(fn):
            return record(xn, Status.FAILED_NONFINITE, outer)
        r_old, r = r, -fn
        ll_new = prob.loglik(xn)
        if not np.isfinite(ll_new):
            return record(xn, Status.FAILED_NONFINITE, outer)
        if ll_new < obj_val:
            # barrier step lost likelihood; keep the better point
            return record(x, Status.CONVERGED, outer)
        x, obj_val = xn, ll_new
        if abs(r - r_old) < (1e-3 + abs(r)) * settings.outer_rel_tol:
            return record(x, Status.CONVERGED, outer)
        if not adaptive:
            mu /= settings.mu_reduction
    return record(x, Status.MAX_ITERS, settings.max_outer_iters)
