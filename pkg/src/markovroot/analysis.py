"""Post-search diagnostics: rank curves, plateaus, uniqueness of the global
maximiser in terms of P^T, and CSV emission for plotting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import StochasticMatrix, complete_rows
from .gridsearch import SearchReport
from .optimizer import OptimizerSettings, maximize
from .spectral import (DefectiveMatrixError, EnumerationInfeasibleError, NoRealRootError,
                       RootCandidate, enumerate_real_roots)

TAU_EQUIV = 1e-6
# tied maximisers are re-optimised with these before P^T-equivalence grouping:
# search tolerances leave boundary maximisers ~1e-5 apart, far above TAU_EQUIV
POLISH_SETTINGS = OptimizerSettings(barrier_mu=1e-10, outer_rel_tol=1e-15, inner_abs_tol=1e-14,
                                    inner_rel_tol=1e-16, max_outer_iters=200, max_inner_iters=5000)
# plateau gap threshold relative to |max loglik|; coarser gaps chain closely
# spaced levels into one "plateau" spanning many log-likelihood units
LEVEL_REL_TOL = 1e-6

# dashed-line cutoffs used for the distance panels
TOP_FRACTION_PRESETS = {
    ("study3", 6): 0.9375,
    ("study4", 2): 0.3125,
    ("study4", 24): 0.01,
    ("study5", 2): 0.5,
    ("study5", 24): 0.03,
    ("study6", 2): 0.5,
    ("study6", 24): 0.03,
    ("study7", 2): 0.125,
    ("study8", 2): 0.125,
}


class EmptyReportError(ValueError):
    pass


@dataclass(frozen=True)
class RankCurve:
    rank: np.ndarray  # (0, 1]
    loglik: np.ndarray
    grad_linf: np.ndarray
    index: np.ndarray

    def __len__(self):
        return len(self.rank)


def rank_curve(report: SearchReport) -> RankCurve:
    """Converged records in ascending log-likelihood; ties by grid index."""
    c = report.converged
    if not len(c):
        raise EmptyReportError("report has no converged records")
    order = np.lexsort((c["index"], c["loglik"]))
    c = c[order]
    k = len(c)
    return RankCurve(np.arange(1, k + 1) / k, c["loglik"].copy(), c["grad_linf"].copy(), c["index"].copy())


@dataclass(frozen=True)
class Plateau:
    loglik_level: float  # highest member
    loglik_low: float
    member_count: int
    fraction_of_grid: float
    grad_linf_min: float
    grad_linf_max: float
    grad_linf_median: float


@dataclass(frozen=True)
class PlateauSummary:
    plateaus: list  # descending by level
    global_plateau_fraction: float
    level_tol: float

    @property
    def top(self) -> Plateau:
        return self.plateaus[0]


def default_level_tol(report: SearchReport) -> float:
    return LEVEL_REL_TOL * abs(report.global_max_loglik)


def detect_plateaus(report: SearchReport, level_tol: float | None = None) -> PlateauSummary:
    """Single-linkage groups of converged log-likelihoods: consecutive sorted
    values closer than level_tol share a plateau."""
    if level_tol is None:
        level_tol = default_level_tol(report) if len(report.converged) else 1.0
    if not level_tol > 0:
        raise ValueError("level_tol must be positive")
    c = report.converged
    if not len(c):
        return PlateauSummary([], 0.0, level_tol)
    order = np.argsort(-c["loglik"], kind="stable")
    ll = c["loglik"][order]
    gr = c["grad_linf"][order]
    cuts = np.flatnonzero(ll[:-1] - ll[1:] > level_tol) + 1
    bounds = np.concatenate([[0], cuts, [len(ll)]])
    m = report.total_points
    plateaus = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        g = gr[a:b]
        plateaus.append(Plateau(float(ll[a]), float(ll[b - 1]), int(b - a), (b - a) / m,
                                float(g.min()), float(g.max()), float(np.median(g))))
    return PlateauSummary(plateaus, plateaus[0].fraction_of_grid, level_tol)


@dataclass(frozen=True)
class Representative:
    P_hat: np.ndarray
    PT_hat: np.ndarray
    member_indices: tuple


@dataclass(frozen=True)
class MaximizerSet:
    representatives: list
    unique_in_PT: bool


@dataclass(frozen=True)
class UniquenessResult:
    maximizers: MaximizerSet
    index: np.ndarray  # top-band grid indices, descending log-likelihood
    loglik: np.ndarray
    distance: np.ndarray  # L-inf distance of P~_i^T to the global maximiser's P^T
    top_fraction: float

    @property
    def max_distance(self) -> float:
        return float(self.distance.max()) if len(self.distance) else 0.0

    @property
    def unique_in_PT(self) -> bool:
        return self.maximizers.unique_in_PT


def _powers(thetas: np.ndarray, t: int) -> np.ndarray:
    return np.stack([np.linalg.matrix_power(complete_rows(th), t) for th in thetas])


def top_band(report: SearchReport, top_fraction: float) -> np.ndarray:
    """Converged records whose log-likelihood ranks in the top fraction,
    sorted by descending log-likelihood (ties by index)."""
    if not 0 < top_fraction <= 1:
        raise ValueError("top_fraction must lie in (0, 1]")
    c = report.converged
    k = max(1, math.ceil(top_fraction * len(c) - 1e-9))
    order = np.lexsort((c["index"], -c["loglik"]))
    return c[order[:k]]


def polish(ctx, theta: np.ndarray, loglik: float, settings: OptimizerSettings = POLISH_SETTINGS) -> np.ndarray:
    """Re-optimise a convergence point with a vanishing barrier and tight
    tolerances; the original Theta is kept if that does not improve it."""
    try:
        rec = maximize(ctx, theta, settings)
    except ValueError:  # not strictly interior
        return theta
    return rec.theta_final if rec.converged and rec.loglik >= loglik else theta


def maximizer_uniqueness(report: SearchReport, top_fraction: float, ctx=None,
                         tau_equiv: float = TAU_EQUIV, polish_ties: bool = True) -> UniquenessResult:
    """Group the tied global maximisers by P^T-equivalence and measure how far
    every top-band convergence point's P^T lies from the best one's.

    With ``polish_ties`` each tied maximiser is polished (see ``polish``)
    before grouping, so equivalence is judged at the optimum rather than at
    the search's stopping tolerance."""
    ctx = ctx or report.ctx
    t = ctx.T
    band = top_band(report, top_fraction)
    pts = _powers(band["theta"], t)
    best_pt = pts[0]
    dist = np.abs(pts - best_pt).reshape(len(pts), -1).max(axis=1)

    tied = set(report.argmax_set.tolist())
    reps: list = []
    for k, rec in enumerate(band):
        if int(rec["index"]) not in tied:
            continue
        th = polish(ctx, rec["theta"], float(rec["loglik"])) if polish_ties else rec["theta"]
        pt = np.linalg.matrix_power(complete_rows(th), t)
        for r in reps:
            if np.abs(r["PT"] - pt).max() <= tau_equiv:
                r["members"].append(int(rec["index"]))
                break
        else:
            reps.append({"P": complete_rows(th), "PT": pt, "members": [int(rec["index"])]})
    rep_objs = [Representative(r["P"], r["PT"], tuple(sorted(r["members"]))) for r in reps]
    return UniquenessResult(MaximizerSet(rep_objs, len(rep_objs) == 1), band["index"].copy(),
                            band["loglik"].copy(), dist, top_fraction)


@dataclass(frozen=True)
class RootRecovery:
    feasible: bool
    roots: list  # stochastic RootCandidates
    reason: str = ""


def recover_roots(pt_hat: np.ndarray, t: int, budget: int = 100_000) -> RootRecovery:
    """Stochastic primary T-th roots of a maximiser's P^T, when enumerable."""
    try:
        cands = enumerate_real_roots(pt_hat, t, budget)
    except (DefectiveMatrixError, EnumerationInfeasibleError, NoRealRootError) as exc:
        return RootRecovery(False, [], str(exc))
    return RootRecovery(True, [c for c in cands if c.is_stochastic])


def refinement_advice(summary: PlateauSummary, min_fraction: float = 0.01) -> str | None:
    """Suggest a refined search when the top plateau is too thin to trust."""
    if not summary.plateaus:
        return "no converged records: loosen tolerances or change the grid"
    if summary.global_plateau_fraction < min_fraction:
        return (f"top plateau holds {100 * summary.global_plateau_fraction:.3g}% of the grid: "
                "rerun a finer grid within a radius of the best point before trusting it")
    return None


# -- CSV emission --------------------------------------------------------------

FIGURE_KINDS = {
    **{f"fig{k}": "rank" for k in (1, 2, 3, 6, 9, 10, 11, 12)},
    "fig4": "gradient",
    **{f"fig{k}": "distance" for k in (5, 7, 8)},
    **{f"figS{k}": "distance" for k in range(1, 7)},
    "rank": "rank",
    "gradient": "gradient",
    "distance": "distance",
}

FIGURE_TOP_FRACTION = {
    "fig5": 0.9375, "fig7": 0.3125, "fig8": 0.01,
    "figS1": 0.5, "figS2": 0.03, "figS3": 0.5, "figS4": 0.03, "figS5": 0.125, "figS6": 0.125,
}


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(int(v))


def _write_csv(path: Path, header_comment: str, columns: list, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# {header_comment}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def emit_plot_data(report: SearchReport, which: str, out_dir, top_fraction: float | None = None,
                   prefix: str | None = None) -> Path:
    """Write the CSV behind one figure panel and return its path.

    ``which`` is a figure id (fig1..fig12, figS1..figS6) or a panel kind
    (rank, gradient, distance).
    """
    if which not in FIGURE_KINDS:
        raise KeyError(f"unknown figure id {which!r}")
    kind = FIGURE_KINDS[which]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{prefix + '_' if prefix else ''}{which}_{kind}.csv"
    t = report.ctx.T
    if kind == "rank":
        rc = rank_curve(report)
        _write_csv(path, f"rank curve T={t}: scaled rank in (0,1], log-likelihood, L-inf gradient norm, grid index",
                   ["rank", "loglik", "grad_linf", "index"],
                   zip(rc.rank, rc.loglik, rc.grad_linf, rc.index))
    elif kind == "gradient":
        c = report.converged
        c = c[np.argsort(c["index"])]
        _write_csv(path, f"gradient vs log-likelihood T={t}: one row per converged grid point",
                   ["loglik", "grad_linf", "index"], zip(c["loglik"], c["grad_linf"], c["index"]))
    else:
        frac = top_fraction or FIGURE_TOP_FRACTION.get(which, 1.0)
        u = maximizer_uniqueness(report, frac)
        _write_csv(path, f"L-inf distance of P^{t} to the global maximiser, top {100 * frac:g}% of log-likelihoods",
                   ["loglik", "distance", "index"], zip(u.loglik, u.distance, u.index))
    return path


def as_stochastic(theta: np.ndarray) -> StochasticMatrix:
    return StochasticMatrix(np.clip(complete_rows(theta), 0.0, 1.0))
