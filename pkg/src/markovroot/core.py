"""Matrix primitives: counts, stochastic matrices, constraint masks and the
free-parameter matrix Theta whose last column is implied by row sums."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

STOCH_TOL = 1e-9


class ValidationError(ValueError):
    pass


class UnidentifiableRowError(ValidationError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CountMatrix:
    """Observed transitions over one observation interval; rows are origins."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 2:
            raise ValidationError(f"count matrix must be square with s >= 2, got shape {c.shape}")
        if not np.all(np.isfinite(c)) or np.any(c < 0) or np.any(c != np.round(c)):
            raise ValidationError("counts must be nonnegative integers")
        c = c.astype(np.int64)
        if not np.any(c.sum(axis=1) > 0):
            raise ValidationError("at least one row must have a positive total")
        object.__setattr__(self, "counts", _frozen(c))

    @property
    def s(self) -> int:
        return self.counts.shape[0]

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @classmethod
    def from_csv(cls, path) -> "CountMatrix":
        with open(path, newline="") as fh:
            rows = [[int(float(tok)) for tok in row] for row in csv.reader(fh) if row and any(t.strip() for t in row)]
        return cls(np.array(rows))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(self.counts.tolist())


@dataclass(frozen=True, eq=False)
class StochasticMatrix:
    p: np.ndarray
    tol: float = STOCH_TOL

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValidationError(f"transition matrix must be square, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValidationError("transition matrix has nonfinite entries")
        if p.min() < -self.tol or p.max() > 1 + self.tol:
            raise ValidationError(f"entries outside [0, 1]: min {p.min():.3g}, max {p.max():.3g}")
        dev = np.abs(p.sum(axis=1) - 1).max()
        if dev > self.tol:
            raise ValidationError(f"rows do not sum to one (max deviation {dev:.3g})")
        object.__setattr__(self, "p", _frozen(p))

    @property
    def s(self) -> int:
        return self.p.shape[0]


def is_stochastic(a: np.ndarray, tol: float = STOCH_TOL) -> bool:
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return False
    return bool(a.min() >= -tol and np.abs(a.sum(axis=1) - 1).max() <= tol)


@dataclass(frozen=True, eq=False)
class ConstraintMask:
    """Free/fixed status of each entry of Theta (columns 1..s-1).

    ``fixed`` is an s x (s-1) array holding the fixed value of each entry or
    NaN where the entry is free. Column s of P is always the row remainder.
    """

    fixed: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.fixed, dtype=float)
        if f.ndim != 2 or f.shape[1] != f.shape[0] - 1:
            raise ValidationError(f"mask must be s x (s-1), got shape {f.shape}")
        vals = np.where(np.isnan(f), 0.0, f)
        if np.any(vals < 0) or np.any(vals > 1):
            raise ValidationError("fixed values must lie in [0, 1]")
        if np.any(vals.sum(axis=1) > 1 + STOCH_TOL):
            raise ValidationError("fixed values in a row sum above one")
        object.__setattr__(self, "fixed", _frozen(f))

    @classmethod
    def unconstrained(cls, s: int) -> "ConstraintMask":
        return cls(np.full((s, s - 1), np.nan))

    @classmethod
    def from_rows(cls, rows) -> "ConstraintMask":
        """Build from per-row specs: ``"absorbing"`` or a list of
        ``"free"``/float tokens for columns 1..s-1."""
        s = len(rows)
        out = np.full((s, s - 1), np.nan)
        for i, row in enumerate(rows):
            if isinstance(row, str):
                if row.strip().lower() != "absorbing":
                    raise ValidationError(f"unknown row flag {row!r}")
                out[i] = 0.0
                if i < s - 1:
                    out[i, i] = 1.0
                continue
            if len(row) != s - 1:
                raise ValidationError(f"row {i + 1}: expected {s - 1} tokens, got {len(row)}")
            for j, tok in enumerate(row):
                if isinstance(tok, str) and tok.strip().lower() == "free":
                    continue
                try:
                    out[i, j] = float(tok)
                except ValueError:
                    raise ValidationError(f"row {i + 1}: bad mask token {tok!r}") from None
        return cls(out)

    @classmethod
    def from_csv(cls, path) -> "ConstraintMask":
        with open(path, newline="") as fh:
            rows = []
            for row in csv.reader(fh):
                toks = [t.strip() for t in row if t.strip()]
                if not toks:
                    continue
                rows.append(toks[0] if len(toks) == 1 and toks[0].lower() == "absorbing" else toks)
        return cls.from_rows(rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for i in range(self.s):
                if self.is_absorbing(i):
                    w.writerow(["absorbing"])
                else:
                    w.writerow(["free" if np.isnan(v) else repr(float(v)) for v in self.fixed[i]])

    @property
    def s(self) -> int:
        return self.fixed.shape[0]

    @property
    def free(self) -> np.ndarray:
        return np.isnan(self.fixed)

    @property
    def n_free(self) -> int:
        return int(self.free.sum())

    def row_fixed(self, i: int) -> bool:
        return not self.free[i].any()

    def fixed_row(self, i: int) -> np.ndarray:
        """Full row i of P when every Theta entry of the row is fixed."""
        if not self.row_fixed(i):
            raise UnidentifiableRowError(f"row {i + 1} has free entries")
        th = self.fixed[i]
        return np.append(th, 1.0 - th.sum())

    def is_absorbing(self, i: int) -> bool:
        if not self.row_fixed(i):
            return False
        e = np.zeros(self.s)
        e[i] = 1.0
        return bool(np.allclose(self.fixed_row(i), e))


@dataclass(frozen=True, eq=False)
class ThetaParam:
    theta: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        if th.ndim != 2 or th.shape[1] != th.shape[0] - 1:
            raise ValidationError(f"theta must be s x (s-1), got shape {th.shape}")
        if np.any(th < 0) or np.any(th.sum(axis=1) > 1 + STOCH_TOL):
            raise ValidationError("theta rows must be nonnegative with sums <= 1")
        object.__setattr__(self, "theta", _frozen(th))

    @property
    def s(self) -> int:
        return self.theta.shape[0]

    def free_vector(self, mask: ConstraintMask) -> np.ndarray:
        return self.theta[mask.free].copy()

    @classmethod
    def from_free(cls, x: np.ndarray, mask: ConstraintMask) -> "ThetaParam":
        return cls(fill_theta(x, mask))


def fill_theta(x: np.ndarray, mask: ConstraintMask) -> np.ndarray:
    """Scatter a free-parameter vector (row-major order) into a Theta array."""
    th = np.where(mask.free, 0.0, mask.fixed)
    th[mask.free] = x
    return th


def complete_rows(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return np.column_stack([theta, 1.0 - theta.sum(axis=1)])


def interval_mle(counts: CountMatrix, mask: ConstraintMask | None = None) -> StochasticMatrix:
    """Row-normalised counts; zero-total rows are taken from the mask."""
    n = counts.counts.astype(float)
    tot = n.sum(axis=1)
    out = np.empty_like(n)
    for i in range(counts.s):
        if tot[i] > 0:
            out[i] = n[i] / tot[i]
        elif mask is not None and mask.row_fixed(i):
            out[i] = mask.fixed_row(i)
        else:
            raise UnidentifiableRowError(f"unidentifiable row {i + 1}: no counts and no fixed row in mask")
    return StochasticMatrix(out)


def theta_to_matrix(theta: ThetaParam, mask: ConstraintMask | None = None) -> StochasticMatrix:
    th = theta.theta
    if mask is not None:
        fx = ~mask.free
        if not np.allclose(th[fx], mask.fixed[fx], atol=STOCH_TOL, rtol=0):
            raise ValidationError("theta disagrees with the mask's fixed entries")
    return StochasticMatrix(complete_rows(th))


def matrix_to_theta(p: StochasticMatrix | np.ndarray) -> ThetaParam:
    a = p.p if isinstance(p, StochasticMatrix) else np.asarray(p)
    return ThetaParam(np.clip(a[:, :-1], 0.0, None))


def matrix_power(p, t: int) -> np.ndarray:
    """P**t by binary exponentiation. Accepts a StochasticMatrix or array."""
    if t < 0 or int(t) != t:
        raise ValueError("power must be a nonnegative integer")
    a = p.p if isinstance(p, StochasticMatrix) else np.asarray(p, dtype=float)
    return np.linalg.matrix_power(a, int(t))


def _arr(a):
    return a.p if isinstance(a, StochasticMatrix) else np.asarray(a, dtype=float)


def linf_distance(a, b) -> float:
    """Largest entrywise absolute difference."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.abs(a - b).max())


def frobenius_rel_error(a, b) -> float:
    """||A - B||_F / ||B||_F."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    nb = np.linalg.norm(b)
    if nb == 0:
        raise ValidationError("reference matrix is all zeros")
    return float(np.linalg.norm(a - b) / nb)


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(Path(path), delimiter=",", ndmin=2)
