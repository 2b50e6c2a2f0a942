import numpy as np
import pytest

from markovroot.analysis import (FIGURE_KINDS, EmptyReportError, detect_plateaus, emit_plot_data,
                                 maximizer_uniqueness, polish, rank_curve, recover_roots, refinement_advice,
                                 top_band)
from markovroot.core import ConstraintMask, CountMatrix
from markovroot.gridsearch import GridSpec, SearchReport, record_dtype
from markovroot.likelihood import LikelihoodContext, log_likelihood
from markovroot.optimizer import OptimizerSettings, Status


def _report(logliks, thetas=None, status=None, grads=None, t=2):
    """A hand-built report for s = 2 (theta has one column)."""
    n = len(logliks)
    ctx = LikelihoodContext(CountMatrix(np.array([[5, 5], [3, 7]])), t, ConstraintMask.unconstrained(2))
    spec = GridSpec(ctx.mask, 200)  # 199 points per row; plenty of indices
    rec = np.zeros(n, dtype=record_dtype(2))
    rec["index"] = np.arange(n)
    rec["loglik"] = logliks
    rec["status"] = int(Status.CONVERGED) if status is None else status
    rec["grad_linf"] = np.abs(np.asarray(logliks)) * 1e-3 if grads is None else grads
    if thetas is None:
        thetas = np.tile([[0.5], [0.5]], (n, 1, 1))
    rec["theta"] = thetas
    return SearchReport(ctx, spec, OptimizerSettings(), rec)


def test_rank_curve_sorted_and_scaled():
    rep = _report([-3.0, -1.0, -2.0, -1.0], status=[0, 0, 1, 0])
    rc = rank_curve(rep)
    assert len(rc) == 3  # failed record excluded
    np.testing.assert_allclose(rc.rank, [1 / 3, 2 / 3, 1.0])
    np.testing.assert_array_equal(rc.loglik, [-3.0, -1.0, -1.0])
    np.testing.assert_array_equal(rc.index, [0, 1, 3])  # ties by index


def test_rank_curve_empty_raises():
    with pytest.raises(EmptyReportError):
        rank_curve(_report([-1.0], status=[1]))


def test_plateaus_single_linkage():
    ll = [-10.0, -10.00001, -5.0, -5.00002, -5.00001, -1.0]
    rep = _report(ll)
    summ = detect_plateaus(rep, level_tol=1e-3)
    assert [p.member_count for p in summ.plateaus] == [1, 3, 2]
    assert summ.top.loglik_level == -1.0
    m = rep.total_points
    assert summ.global_plateau_fraction == pytest.approx(1 / m)
    assert sum(p.fraction_of_grid for p in summ.plateaus) <= 1.0
    with pytest.raises(ValueError):
        detect_plateaus(rep, level_tol=0.0)


def test_plateau_default_tolerance_is_relative():
    rep = _report([-1000.0, -1000.0005, -1000.002])
    summ = detect_plateaus(rep)  # 1e-6 * 1000 = 1e-3
    assert [p.member_count for p in summ.plateaus] == [2, 1]


def test_top_band():
    rep = _report([-3.0, -1.0, -2.0, -4.0])
    band = top_band(rep, 0.5)
    np.testing.assert_array_equal(band["index"], [1, 2])
    assert len(top_band(rep, 0.01)) == 1
    with pytest.raises(ValueError):
        top_band(rep, 0.0)


def test_uniqueness_equivalent_roots_collapse():
    # two different P with the same P^2 are one maximiser in terms of P^2
    p = np.array([[0.9, 0.1], [0.3, 0.7]])
    lam, pi = 0.6, np.array([0.75, 0.25])
    proj = np.outer(np.ones(2), pi)
    r_plus = proj + np.sqrt(lam) * (np.eye(2) - proj)
    r_minus = proj - np.sqrt(lam) * (np.eye(2) - proj)
    thetas = np.stack([r_plus[:, :1], r_minus[:, :1], np.array([[0.2], [0.6]])])
    rep = _report([-1.0, -1.0, -7.0], thetas=thetas)
    u = maximizer_uniqueness(rep, 1.0, polish_ties=False)
    assert u.unique_in_PT
    assert u.maximizers.representatives[0].member_indices == (0, 1)
    np.testing.assert_allclose(u.maximizers.representatives[0].PT_hat, p, atol=1e-12)
    np.testing.assert_allclose(u.distance[:2], 0.0, atol=1e-12)
    assert u.distance[2] > 0.1


def test_uniqueness_distinct_maximisers():
    thetas = np.stack([np.array([[0.2], [0.6]]), np.array([[0.6], [0.2]])])
    rep = _report([-1.0, -1.0], thetas=thetas)
    u = maximizer_uniqueness(rep, 1.0, polish_ties=False)
    assert not u.unique_in_PT
    assert len(u.maximizers.representatives) == 2
    # squares: [[.52, .48], [.36, .64]] vs [[.6, .4], [.44, .56]]
    assert u.max_distance == pytest.approx(0.08)


def test_polishing_merges_imprecise_ties():
    # two stopping points 1e-4 either side of the positive square root of the
    # interval MLE: distinct at TAU_EQUIV until polished onto the optimum
    pi = np.array([0.375, 0.625])
    proj = np.outer(np.ones(2), pi)
    root = proj + np.sqrt(0.2) * (np.eye(2) - proj)
    rep0 = _report([0.0])
    thetas = np.stack([root[:, :1] + 1e-4, root[:, :1] - 1e-4])
    ll = min(log_likelihood(rep0.ctx, th) for th in thetas)
    rep = _report([ll, ll], thetas=thetas)
    assert len(maximizer_uniqueness(rep, 1.0, polish_ties=False).maximizers.representatives) == 2
    u = maximizer_uniqueness(rep, 1.0)
    assert u.unique_in_PT
    np.testing.assert_allclose(u.maximizers.representatives[0].PT_hat, [[0.5, 0.5], [0.3, 0.7]], atol=1e-7)


def test_polish_keeps_start_when_not_improved():
    rep = _report([0.0])
    th = np.array([[0.5], [0.5]])
    np.testing.assert_array_equal(polish(rep.ctx, th, 1e9), th)


def test_recover_roots():
    p = np.array([[0.9, 0.1], [0.3, 0.7]])
    rr = recover_roots(p @ p, 2)
    assert rr.feasible and len(rr.roots) == 1
    np.testing.assert_allclose(rr.roots[0].matrix, p, atol=1e-12)
    assert not recover_roots(np.eye(2), 2).feasible  # repeated eigenvalue


def test_refinement_advice():
    rep = _report([-1.0] + [-5.0] * 10)
    assert "finer grid" in refinement_advice(detect_plateaus(rep, 0.1))
    rep = _report([-1.0] * 150)  # 150 of 199**2 points
    assert refinement_advice(detect_plateaus(rep, 0.1), min_fraction=1e-3) is None


def test_emit_rank_csv(tmp_path):
    rep = _report([-3.0, -1.0, -2.0], status=[0, 0, 1])
    path = emit_plot_data(rep, "fig2", tmp_path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ")
    assert lines[1] == "rank,loglik,grad_linf,index"
    assert len(lines) - 2 == len(rep.converged)


def test_emit_gradient_and_distance(tmp_path):
    rep = _report([-3.0, -1.0, -2.0, -1.5])
    g = emit_plot_data(rep, "fig4", tmp_path, prefix="s3")
    assert g.name == "s3_fig4_gradient.csv"
    assert g.read_text().splitlines()[1] == "loglik,grad_linf,index"
    d = emit_plot_data(rep, "distance", tmp_path, top_fraction=0.5)
    rows = d.read_text().splitlines()[2:]
    assert len(rows) == 2
    assert float(rows[0].split(",")[1]) == 0.0


def test_emit_unknown_figure(tmp_path):
    with pytest.raises(KeyError):
        emit_plot_data(_report([-1.0]), "fig99", tmp_path)


def test_every_figure_id_known():
    for k in range(1, 13):
        assert f"fig{k}" in FIGURE_KINDS
    for k in range(1, 7):
        assert FIGURE_KINDS[f"figS{k}"] == "distance"
