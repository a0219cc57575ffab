import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jorge.errors import NumericError, ShapeError
from jorge.linalg import (
    as_matrix,
    collapse_to_matrix,
    count_ops,
    exact_inv_root,
    frobenius_norm,
    identity,
    matmul,
    sym_eig,
    symmetry_error,
)

from oracles import inv_root_eigh, matmul_loops


def random_spd(rng, n, floor=1e-3):
    a = rng.standard_normal((n, n))
    return a @ a.T + floor * np.eye(n)


def test_matmul_matches_triple_loop_exactly_on_integers():
    rng = np.random.default_rng(0)
    a = rng.integers(-9, 10, size=(5, 7)).astype(float)
    b = rng.integers(-9, 10, size=(7, 3)).astype(float)
    assert np.array_equal(matmul(a, b), matmul_loops(a.tolist(), b.tolist()))


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_identity_is_neutral():
    a = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(matmul(identity(2), a), a)
    assert np.array_equal(identity(3, 2.5), 2.5 * np.eye(3))


def test_as_matrix_rejects_bad_input():
    with pytest.raises(ShapeError):
        as_matrix(np.ones(3))
    with pytest.raises(NumericError, match="weights"):
        as_matrix([[1.0, np.nan]], name="weights")


def test_collapse_to_matrix():
    assert collapse_to_matrix([4], np.arange(4)).shape == (1, 4)
    out = collapse_to_matrix([2, 3, 4], np.arange(24))
    assert out.shape == (2, 12)
    assert out[1, 0] == 12
    with pytest.raises(ShapeError):
        collapse_to_matrix([2, 2], np.arange(5))


def test_frobenius_norm_and_overflow():
    assert frobenius_norm(np.array([[3.0, 4.0]])) == 5.0
    assert frobenius_norm(np.array([[3e200, 4e200]])) == pytest.approx(5e200)
    assert frobenius_norm(np.zeros((2, 2))) == 0.0


def test_sym_eig_two_by_two():
    res = sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(res.eigenvalues, [1.0, 3.0], atol=1e-14)
    v = res.eigenvectors
    np.testing.assert_allclose(v.T @ v, np.eye(2), atol=1e-14)


def test_sym_eig_diagonal_is_immediate():
    res = sym_eig(np.diag([3.0, -1.0, 2.0]))
    np.testing.assert_allclose(res.eigenvalues, [-1.0, 2.0, 3.0])


@pytest.mark.parametrize("n", [1, 2, 3, 7, 16, 33])
def test_sym_eig_matches_numpy(n):
    rng = np.random.default_rng(n)
    a = rng.standard_normal((n, n))
    a = a + a.T
    res = sym_eig(a)
    np.testing.assert_allclose(res.eigenvalues, np.linalg.eigvalsh(a), atol=1e-10 * np.abs(a).max())
    np.testing.assert_allclose(res.reconstruct(), a, atol=1e-11 * np.linalg.norm(a))


def test_sym_eig_rejects_asymmetric_and_nonsquare():
    with pytest.raises(ShapeError, match="symmetric"):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ShapeError):
        sym_eig(np.ones((2, 3)))


def test_sym_eig_reports_non_convergence():
    rng = np.random.default_rng(1)
    a = random_spd(rng, 6)
    with pytest.raises(NumericError, match="Q"):
        sym_eig(a, name="Q", max_sweeps=0)


def test_exact_inv_root_against_eigh_oracle():
    rng = np.random.default_rng(2)
    a = random_spd(rng, 10)
    np.testing.assert_allclose(exact_inv_root(a, 4, ridge=0.0), inv_root_eigh(a), rtol=1e-9, atol=1e-10)


def test_exact_inv_root_identity_and_scalar():
    np.testing.assert_allclose(exact_inv_root(np.eye(3), 4, ridge=0.0), np.eye(3))
    assert exact_inv_root(np.array([[16.0]]), 4, ridge=0.0)[0, 0] == pytest.approx(0.5)


def test_exact_inv_root_singular_without_ridge():
    with pytest.raises(NumericError, match="acc"):
        exact_inv_root(np.zeros((2, 2)), 4, ridge=0.0, name="acc")
    # the ridge makes it well defined
    assert np.all(np.isfinite(exact_inv_root(np.zeros((2, 2)))))


def test_op_counters_nest():
    a = np.eye(2)
    with count_ops() as outer:
        sym_eig(a)
        with count_ops() as inner:
            exact_inv_root(a)
    assert inner == {"exact_inv_root": 1, "sym_eig": 1}
    assert outer == {"exact_inv_root": 1, "sym_eig": 2}


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_sym_eig_properties(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    a = a + a.T
    res = sym_eig(a)
    assert np.all(np.diff(res.eigenvalues) >= 0)
    q = res.eigenvectors
    np.testing.assert_allclose(q.T @ q, np.eye(n), atol=1e-12)
    np.testing.assert_allclose(res.reconstruct(), a, atol=1e-11 * max(1.0, np.linalg.norm(a)))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_inv_root_properties(n, seed):
    rng = np.random.default_rng(seed)
    a = random_spd(rng, n, floor=0.1)
    r = exact_inv_root(a, 4, ridge=0.0)
    assert symmetry_error(r) < 1e-12
    r4 = np.linalg.matrix_power(r, 4)
    np.testing.assert_allclose(r4 @ a, np.eye(n), atol=1e-8 * np.linalg.cond(a))
