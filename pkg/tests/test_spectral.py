import numpy as np
import pytest
import scipy.linalg
from hypothesis import assume, given, settings, strategies as st

from markovroot.core import interval_mle
from markovroot.fixtures import load_fixture
from markovroot.spectral import (DefectiveMatrixError, EnumerationInfeasibleError, NoRealRootError, count_real_roots,
                                 eigen_decompose, enumerate_real_roots, has_stochastic_root, principal_root)
from oracles import naive_power, two_state_root


def _interval(name):
    fx = load_fixture(name)
    return interval_mle(fx.counts, fx.mask).p


def test_eigen_structure_counts():
    es = eigen_decompose(_interval("study2"))
    assert (es.r, es.c, es.has_negative, es.distinct) == (3, 0, False, True)
    assert es.eigenvalues[es.perron] == pytest.approx(1.0)
    es6 = eigen_decompose(_interval("study6"))
    assert (es6.r, es6.c, es6.has_negative) == (0, 1, False)
    es8 = eigen_decompose(_interval("study8"))
    assert (es8.r, es8.c, es8.has_negative) == (0, 1, True)


def test_repeated_eigenvalues_rejected():
    with pytest.raises(DefectiveMatrixError):
        enumerate_real_roots(np.eye(3), 2)
    # a Jordan block is rejected at decomposition time
    with pytest.raises(DefectiveMatrixError):
        eigen_decompose(np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.0, 0.0, 1.0]]))


def test_principal_root_matches_fractional_power():
    # positive spectrum: the principal root is scipy's fractional matrix power
    p = np.array([[0.8, 0.15, 0.05], [0.1, 0.7, 0.2], [0.05, 0.15, 0.8]])
    for t in (2, 3, 12):
        ours = principal_root(p, t).matrix
        ref = scipy.linalg.fractional_matrix_power(p, 1.0 / t).real
        np.testing.assert_allclose(ours, ref, atol=1e-10)


def test_principal_root_odd_t_negative_eigenvalue_is_real():
    p = np.array([[0.1, 0.9], [0.8, 0.2]])  # eigenvalue -0.7
    root = principal_root(p, 3).matrix
    np.testing.assert_allclose(naive_power(root, 3), p, atol=1e-12)
    np.testing.assert_allclose(root, two_state_root(p, 3), atol=1e-12)


def test_principal_root_even_t_negative_eigenvalue_raises():
    with pytest.raises(NoRealRootError, match="negative eigenvalue"):
        principal_root(_interval("study4"), 2)


def test_two_state_both_branches():
    p = np.array([[0.9, 0.1], [0.3, 0.7]])  # eigenvalue 0.6
    roots = enumerate_real_roots(p, 2)
    assert len(roots) == 2
    np.testing.assert_allclose(roots[0].matrix, two_state_root(p, 2, +1), atol=1e-12)
    np.testing.assert_allclose(roots[1].matrix, two_state_root(p, 2, -1), atol=1e-12)
    assert roots[0].is_stochastic
    assert not roots[1].is_stochastic  # diagonal 0.5 - 0.77 < 0


def test_even_t_negative_eigenvalue_has_no_roots():
    assert enumerate_real_roots(_interval("study4"), 24) == []
    assert not has_stochastic_root(_interval("study3"), 6)


def test_identity_like_stochastic_root_detected():
    p = np.array([[0.9, 0.1], [0.2, 0.8]])
    q = naive_power(p, 4)
    assert has_stochastic_root(q, 4)
    found = [c.matrix for c in enumerate_real_roots(q, 4) if c.is_stochastic]
    assert any(np.allclose(m, p, atol=1e-10) for m in found)


def test_budget_guard():
    with pytest.raises(EnumerationInfeasibleError):
        enumerate_real_roots(_interval("study6"), 100, budget=50)


def test_study6_large_t_roots_not_stochastic():
    for t in (24, 100):
        roots = enumerate_real_roots(_interval("study6"), t)
        assert len(roots) == t
        assert not any(c.is_stochastic for c in roots)


def test_singular_matrix_has_no_primary_root():
    p = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.2, 0.3, 0.5]])
    with pytest.raises((NoRealRootError, DefectiveMatrixError)):
        enumerate_real_roots(p, 2)


def _random_stochastic(seed, s):
    rng = np.random.default_rng(seed)
    return rng.dirichlet(np.ones(s), size=s)


@given(st.integers(0, 10_000), st.integers(2, 4), st.sampled_from([2, 3, 4, 5, 6]))
@settings(max_examples=60, deadline=None)
def test_every_enumerated_root_is_a_root(seed, s, t):
    p = _random_stochastic(seed, s)
    try:
        es = eigen_decompose(p)
    except DefectiveMatrixError:
        assume(False)
    assume(es.distinct and np.abs(es.eigenvalues).min() > 1e-3)
    roots = enumerate_real_roots(p, t)
    assert len(roots) == count_real_roots(es, t)
    expected = 0 if (t % 2 == 0 and es.has_negative) else (2 ** es.r if t % 2 == 0 else 1) * t ** es.c
    assert len(roots) == expected
    for c in roots:
        np.testing.assert_allclose(naive_power(c.matrix, t), p, atol=1e-7)
        np.testing.assert_allclose(c.matrix.sum(axis=1), 1.0, atol=1e-9)
        assert c.min_entry == pytest.approx(c.matrix.min())
    # canonical ordering
    labels = [c.branch_labels for c in roots]
    assert labels == sorted(labels)
    # pairwise distinct
    for i in range(len(roots)):
        for j in range(i):
            assert np.abs(roots[i].matrix - roots[j].matrix).max() > 1e-8


@given(st.integers(0, 10_000), st.integers(2, 4), st.sampled_from([2, 3, 6, 12]))
@settings(max_examples=40, deadline=None)
def test_powers_of_a_stochastic_matrix_have_a_stochastic_root(seed, s, t):
    p = _random_stochastic(seed, s)
    try:
        es = eigen_decompose(p)
    except DefectiveMatrixError:
        assume(False)
    assume(es.distinct and np.abs(es.eigenvalues).min() > 0.05)
    q = naive_power(p, t)
    try:
        eq = eigen_decompose(q)
        assume(eq.distinct and np.abs(eq.eigenvalues).min() > 1e-6)
    except DefectiveMatrixError:
        assume(False)
    roots = enumerate_real_roots(q, t)
    assert any(c.is_stochastic and np.allclose(c.matrix, p, atol=1e-6) for c in roots)
