import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from markovroot.core import (ConstraintMask, CountMatrix, StochasticMatrix, ThetaParam, UnidentifiableRowError,
                             ValidationError, complete_rows, fill_theta, frobenius_rel_error, interval_mle,
                             is_stochastic, linf_distance, matrix_power, matrix_to_theta, theta_to_matrix)
from markovroot.fixtures import load_fixture


def test_interval_mle_hand_normalisation():
    p = interval_mle(CountMatrix(np.array([[1, 1], [3, 1]])))
    np.testing.assert_allclose(p.p, [[0.5, 0.5], [0.75, 0.25]])


def test_interval_mle_diagonal_counts_is_identity():
    p = interval_mle(CountMatrix(10 * np.eye(3, dtype=int)))
    np.testing.assert_array_equal(p.p, np.eye(3))


def test_interval_mle_absorbing_zero_row():
    fx = load_fixture("study2")
    p = interval_mle(fx.counts, fx.mask)
    np.testing.assert_array_equal(p.p[3], [0, 0, 0, 1])
    np.testing.assert_allclose(p.p[0], [0.721, 0.202, 0.067, 0.010], atol=5e-4)


def test_interval_mle_zero_row_without_mask_is_unidentifiable():
    with pytest.raises(UnidentifiableRowError, match="unidentifiable row"):
        interval_mle(CountMatrix(np.array([[3, 1], [0, 0]])))


@pytest.mark.parametrize("bad", [
    np.array([[1, -1], [0, 2]]),
    np.array([[1.5, 1], [0, 2]]),
    np.zeros((2, 2)),
    np.ones((2, 3)),
    np.ones((1, 1)),
])
def test_count_matrix_rejects_invalid(bad):
    with pytest.raises(ValidationError):
        CountMatrix(bad)


def test_count_matrix_is_immutable():
    c = CountMatrix(np.array([[1, 2], [3, 4]]))
    with pytest.raises(ValueError):
        c.counts[0, 0] = 7


def test_count_matrix_csv_round_trip(tmp_path):
    c = load_fixture("study3").counts
    c.to_csv(tmp_path / "n.csv")
    np.testing.assert_array_equal(CountMatrix.from_csv(tmp_path / "n.csv").counts, c.counts)


@pytest.mark.parametrize("p", [
    [[0.5, 0.6], [0.5, 0.5]],
    [[1.1, -0.1], [0.5, 0.5]],
    [[np.nan, 1.0], [0.5, 0.5]],
])
def test_stochastic_matrix_rejects(p):
    with pytest.raises(ValidationError):
        StochasticMatrix(np.array(p))


def test_stochastic_tolerance():
    StochasticMatrix(np.array([[1 + 1e-12, -1e-12], [0.5, 0.5]]))
    assert not is_stochastic(np.array([[0.973, 0.025, 0.001, 0.001], [0, 0.956, 0.049, -0.005],
                                       [0, 0, 0.976, 0.024], [0, 0, 0, 1]]))


def test_mask_from_rows_and_absorbing():
    m = ConstraintMask.from_rows([["free", "free"], [0, "free"], "absorbing"])
    assert m.n_free == 3
    assert m.is_absorbing(2)
    assert not m.is_absorbing(1)
    np.testing.assert_array_equal(m.fixed_row(2), [0, 0, 1])
    # an absorbing first row fixes theta to (1, 0)
    m1 = ConstraintMask.from_rows(["absorbing", ["free", "free"], ["free", "free"]])
    np.testing.assert_array_equal(m1.fixed_row(0), [1, 0, 0])


def test_mask_rejects_bad_values():
    with pytest.raises(ValidationError):
        ConstraintMask.from_rows([["free"], [1.5]])
    with pytest.raises(ValidationError):
        ConstraintMask.from_rows([[0.7, 0.6], ["free", "free"], ["free", "free"]])
    with pytest.raises(ValidationError):
        ConstraintMask.from_rows([["free", "maybe"], ["free", "free"], ["free", "free"]])
    with pytest.raises(ValidationError):
        ConstraintMask.from_rows([["free"], ["free"], ["free"]])


def test_mask_csv_round_trip(tmp_path):
    m = load_fixture("study2").mask
    m.to_csv(tmp_path / "m.csv")
    back = ConstraintMask.from_csv(tmp_path / "m.csv")
    np.testing.assert_array_equal(np.isnan(back.fixed), np.isnan(m.fixed))
    np.testing.assert_array_equal(np.nan_to_num(back.fixed), np.nan_to_num(m.fixed))
    assert "absorbing" in (tmp_path / "m.csv").read_text()


def test_theta_param_invariants():
    ThetaParam(np.array([[0.2, 0.8], [0.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(ValidationError):
        ThetaParam(np.array([[0.6, 0.6], [0.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ValidationError):
        ThetaParam(np.array([[-0.1, 0.6], [0.0, 0.0], [0.0, 0.0]]))


def test_fill_theta_respects_fixed_entries():
    m = ConstraintMask.from_rows([["free", "free"], [0, "free"], "absorbing"])
    th = fill_theta(np.array([0.1, 0.2, 0.3]), m)
    np.testing.assert_allclose(th, [[0.1, 0.2], [0.0, 0.3], [0.0, 0.0]])
    tp = ThetaParam.from_free(np.array([0.1, 0.2, 0.3]), m)
    np.testing.assert_allclose(tp.free_vector(m), [0.1, 0.2, 0.3])


def test_theta_to_matrix_checks_mask():
    m = ConstraintMask.from_rows([["free"], [0.25]])
    p = theta_to_matrix(ThetaParam(np.array([[0.4], [0.25]])), m)
    np.testing.assert_allclose(p.p, [[0.4, 0.6], [0.25, 0.75]])
    with pytest.raises(ValidationError):
        theta_to_matrix(ThetaParam(np.array([[0.4], [0.3]])), m)


def test_distances():
    a = np.array([[0.5, 0.5], [0.2, 0.8]])
    b = np.array([[0.4, 0.6], [0.2, 0.8]])
    assert linf_distance(a, b) == pytest.approx(0.1)
    assert frobenius_rel_error(b, b) == 0.0
    assert frobenius_rel_error(a, b) == pytest.approx(np.sqrt(0.02) / np.linalg.norm(b))
    with pytest.raises(ValidationError):
        linf_distance(a, np.eye(3))


def test_matrix_power_small_cases():
    p = np.array([[0.9, 0.1], [0.4, 0.6]])
    np.testing.assert_array_equal(matrix_power(p, 0), np.eye(2))
    np.testing.assert_allclose(matrix_power(p, 3), p @ p @ p)
    with pytest.raises(ValueError):
        matrix_power(p, -1)


def _theta_rows(s):
    # rows drawn from a Dirichlet-like construction: nonnegative, sum <= 1
    return arrays(np.float64, (s, s), elements=st.floats(0.0, 1.0)).map(
        lambda w: (w / np.maximum(w.sum(axis=1, keepdims=True), 1e-12))[:, : s - 1]
    ).filter(lambda th: np.all(th.sum(axis=1) <= 1.0))


@given(st.integers(2, 5).flatmap(_theta_rows))
@settings(max_examples=60, deadline=None)
def test_complete_rows_is_stochastic_and_round_trips(th):
    p = complete_rows(th)
    assert np.allclose(p.sum(axis=1), 1.0)
    assert p.min() >= -1e-12
    np.testing.assert_allclose(matrix_to_theta(p).theta, np.clip(th, 0, None), atol=1e-15)


@given(st.integers(2, 4).flatmap(_theta_rows), st.integers(1, 30))
@settings(max_examples=40, deadline=None)
def test_powers_of_stochastic_matrices_stay_stochastic(th, t):
    q = matrix_power(complete_rows(th), t)
    assert is_stochastic(q, tol=1e-9)
