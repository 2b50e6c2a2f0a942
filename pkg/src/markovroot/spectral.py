"""Eigenstructure of an interval transition matrix and enumeration of its
real primary T-th roots."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import STOCH_TOL, StochasticMatrix

EIG_TOL = 1e-9
COND_LIMIT = 1e12
ROOT_CHECK_TOL = 1e-8


class DefectiveMatrixError(ValueError):
    pass


class NoRealRootError(ValueError):
    pass


class EnumerationInfeasibleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EigenStructure:
    eigenvalues: np.ndarray  # complex, descending modulus
    eigenvectors: np.ndarray  # columns
    perron: int  # position of the unit eigenvalue
    r: int
    c: int
    has_negative: bool
    distinct: bool

    @property
    def nonunit(self) -> np.ndarray:
        return np.delete(self.eigenvalues, self.perron)

    def reconstruct(self, d: np.ndarray | None = None) -> np.ndarray:
        a = self.eigenvectors
        d = self.eigenvalues if d is None else d
        return a @ np.diag(d) @ np.linalg.inv(a)


@dataclass(frozen=True, eq=False)
class RootCandidate:
    matrix: np.ndarray
    branch_labels: tuple
    is_stochastic: bool
    min_entry: float


def _as_array(p) -> np.ndarray:
    return p.p if isinstance(p, StochasticMatrix) else np.asarray(p, dtype=float)


def eigen_decompose(p) -> EigenStructure:
    a = _as_array(p)
    w, v = np.linalg.eig(a)
    order = sorted(range(len(w)), key=lambda k: (-abs(w[k]), -w[k].real, -w[k].imag))
    w, v = w[order], v[:, order]
    scale = max(1.0, float(np.abs(w).max()))
    w = np.where(np.abs(w.imag) <= EIG_TOL * scale, w.real + 0j, w)
    if np.linalg.cond(v) > COND_LIMIT:
        raise DefectiveMatrixError("defective or near-defective matrix: eigenvector matrix is numerically singular")
    perron = int(np.argmin(np.abs(w - 1.0)))
    rest = np.delete(w, perron)
    real = rest.imag == 0
    r = int(np.sum(real & (rest.real > 0)))
    has_negative = bool(np.any(real & (rest.real < 0)))
    c = int(np.sum(rest.imag > 0))
    diffs = np.abs(w[:, None] - w[None, :])
    np.fill_diagonal(diffs, np.inf)
    distinct = bool(diffs.min() > EIG_TOL)
    return EigenStructure(w, v, perron, r, c, has_negative, distinct)


def _real_branches(lam: float, t: int) -> list[float]:
    """Real T-th roots of a nonzero real number, principal first."""
    mag = abs(lam) ** (1.0 / t)
    if t % 2 == 1:
        return [np.sign(lam) * mag]
    return [mag, -mag] if lam > 0 else []


def _complex_branch(lam: complex, t: int, k: int) -> complex:
    return abs(lam) ** (1.0 / t) * np.exp(1j * (np.angle(lam) + 2 * np.pi * k) / t)


def _branch_options(es: EigenStructure, t: int):
    """Per-eigenvalue branch choices as (position(s), list of labelled root values)."""
    slots = []
    w = es.eigenvalues
    seen = set()
    for k, lam in enumerate(w):
        if k == es.perron or k in seen:
            continue
        if lam.imag == 0:
            roots = _real_branches(lam.real, t)
            slots.append(((k,), [(b, (root,)) for b, root in enumerate(roots)]))
        else:
            # pair the upper-half-plane member with its conjugate partner
            partner = min(
                (j for j in range(len(w)) if j != k and j not in seen and j != es.perron),
                key=lambda j: abs(w[j] - np.conj(lam)),
            )
            seen.add(partner)
            up, lo = (k, partner) if lam.imag > 0 else (partner, k)
            opts = []
            for b in range(t):
                z = _complex_branch(w[up], t, b)
                opts.append((b, (z, np.conj(z))))
            slots.append(((up, lo), opts))
        seen.add(k)
    return slots


def _make_candidate(es: EigenStructure, d: np.ndarray, labels: tuple, p: np.ndarray, t: int) -> RootCandidate | None:
    m = es.reconstruct(d)
    if np.abs(m.imag).max() > EIG_TOL:
        return None
    m = m.real
    if np.abs(np.linalg.matrix_power(m, t) - p).max() > ROOT_CHECK_TOL:
        return None
    return RootCandidate(m, labels, _stochastic_flag(m), float(m.min()))


def _stochastic_flag(m: np.ndarray) -> bool:
    return bool(m.min() >= -STOCH_TOL and np.abs(m.sum(axis=1) - 1).max() <= STOCH_TOL)


def count_real_roots(es: EigenStructure, t: int) -> int:
    n = 1
    for lam in es.nonunit:
        if lam.imag == 0:
            n *= len(_real_branches(lam.real, t))
    return n * t ** es.c


def principal_root(p, t: int) -> RootCandidate:
    """Real principal T-th root A D^(1/T) A^-1.

    For odd T, negative eigenvalues take their real (negative) root.
    """
    a = _as_array(p)
    es = eigen_decompose(a)
    if np.any(np.abs(es.eigenvalues) < EIG_TOL):
        raise NoRealRootError("singular matrix has no primary root")
    if t % 2 == 0 and es.has_negative:
        neg = [f"{lam.real:.3f}" for lam in es.nonunit if lam.imag == 0 and lam.real < 0]
        raise NoRealRootError(f"no real root exists: negative eigenvalue(s) {', '.join(neg)} with even T={t}")
    d = np.empty(len(es.eigenvalues), dtype=complex)
    for k, lam in enumerate(es.eigenvalues):
        if lam.imag == 0 and lam.real < 0:
            d[k] = -abs(lam.real) ** (1.0 / t)
        else:
            d[k] = lam ** (1.0 / t)
    d[es.perron] = 1.0
    labels = tuple(0 for _ in _branch_options(es, t))
    cand = _make_candidate(es, d, labels, a, t)
    if cand is None:
        raise NoRealRootError("principal root is not real")
    return cand


def enumerate_real_roots(p, t: int, budget: int = 100_000) -> list[RootCandidate]:
    """All real primary T-th roots with the unit eigenvalue kept on branch 1.

    Returns an empty list when an even T meets a negative eigenvalue. Order is
    lexicographic in branch labels, so the principal root comes first.
    """
    a = _as_array(p)
    es = eigen_decompose(a)
    if not es.distinct:
        raise DefectiveMatrixError("repeated eigenvalues: primary roots are not enumerated")
    if np.any(np.abs(es.eigenvalues) < EIG_TOL):
        raise NoRealRootError("singular matrix has no primary root")
    n = count_real_roots(es, t)
    if n == 0:
        return []
    if n > budget:
        raise EnumerationInfeasibleError(f"enumeration infeasible: {n} roots exceeds budget {budget}")
    slots = _branch_options(es, t)
    out = []
    for combo in itertools.product(*[opts for _, opts in slots]):
        d = np.empty(len(es.eigenvalues), dtype=complex)
        d[es.perron] = 1.0
        for (pos, _), (_, vals) in zip(slots, combo):
            for k, v in zip(pos, vals):
                d[k] = v
        labels = tuple(b for b, _ in combo)
        cand = _make_candidate(es, d, labels, a, t)
        if cand is not None:
            out.append(cand)
    return out


def has_stochastic_root(p, t: int, budget: int = 100_000) -> bool:
    """Pointwise membership test: does P have a stochastic primary T-th root?"""
    try:
        return any(c.is_stochastic for c in enumerate_real_roots(p, t, budget))
    except NoRealRootError:
        return False
