"""Tests for the dense linear-algebra kernel."""

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from sketchlrf import linalg

# three decimals keep entries away from subnormals while still producing exact zeros and ties
ENTRIES = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False).map(lambda x: round(x, 3))
MATRICES = arrays(np.float64, array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=12), elements=ENTRIES)


def test_orthonormal_columns_of_identity():
    q = linalg.orthonormal_columns(np.eye(3))
    assert q.shape == (3, 3)
    assert np.allclose(np.abs(q), np.eye(3), atol=1e-12)


def test_orthonormal_columns_normalizes_single_column():
    q = linalg.orthonormal_columns([[1.0], [1.0]])
    assert q.shape == (2, 1)
    assert np.allclose(np.abs(q[:, 0]), [2**-0.5, 2**-0.5], atol=1e-12)


def test_orthonormal_columns_detects_rank(rng):
    a = rng.standard_normal((8, 3))
    a[:, 2] = a[:, 0] + a[:, 1]
    # independent rank oracle: the Gram determinant of the first two columns is nonzero
    assert np.linalg.det(a[:, :2].T @ a[:, :2]) > 1e-8

    q = linalg.orthonormal_columns(a)

    assert q.shape == (8, 2)
    assert np.linalg.norm(q.T @ q - np.eye(2)) <= 1e-10
    assert np.linalg.norm(a - q @ (q.T @ a)) <= 1e-8 * np.linalg.norm(a)


def test_orthonormal_columns_rejects_nan():
    with pytest.raises(ValueError, match="NaN"):
        linalg.orthonormal_columns([[1.0, np.nan], [0.0, 1.0]])


def test_orthonormal_rows_span_row_space(rng):
    a = rng.standard_normal((3, 9))
    r = linalg.orthonormal_rows(a)
    assert r.shape == (3, 9)
    assert np.linalg.norm(r @ r.T - np.eye(3)) <= 1e-10
    assert np.linalg.norm(a - (a @ r.T) @ r) <= 1e-8 * np.linalg.norm(a)


def test_complete_orthonormal_extends_basis(rng):
    q = linalg.orthonormal_columns(rng.standard_normal((7, 2)))
    full = linalg.complete_orthonormal(q, 5)
    assert full.shape == (7, 5)
    assert np.allclose(full[:, :2], q)
    assert np.linalg.norm(full.T @ full - np.eye(5)) <= 1e-10


def test_svd_diagonal():
    result = linalg.svd(np.diag([3.0, 2.0, 1.0]))
    assert np.allclose(result.sigma, [3.0, 2.0, 1.0], atol=1e-14)


def test_svd_permutation():
    result = linalg.svd([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(result.sigma, [1.0, 1.0], atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(MATRICES)
def test_svd_invariants(a):
    rows, cols = a.shape
    result = linalg.svd(a)
    r = min(rows, cols)

    assert result.u.shape == (rows, r)
    assert result.v.shape == (cols, r)
    assert np.linalg.norm(result.matrix() - a) <= 1e-8 * (1 + np.linalg.norm(a))
    assert np.linalg.norm(result.u.T @ result.u - np.eye(r)) <= 1e-8 * max(rows, cols)
    assert np.linalg.norm(result.v.T @ result.v - np.eye(r)) <= 1e-8 * max(rows, cols)
    assert np.all(np.diff(result.sigma) <= 0)
    assert np.all(result.sigma >= 0)


def test_svd_matches_reference_singular_values(rng):
    a = rng.standard_normal((12, 9))
    expected = scipy.linalg.svdvals(a)
    assert np.allclose(linalg.svd(a).sigma, expected, rtol=1e-8)


def test_svd_rank_deficient_keeps_orthonormal_factors(rng):
    a = rng.standard_normal((10, 2)) @ rng.standard_normal((2, 6))
    result = linalg.svd(a)
    assert result.numerical_rank() == 2
    assert np.linalg.norm(result.u.T @ result.u - np.eye(6)) <= 1e-10
    assert np.linalg.norm(result.matrix() - a) <= 1e-8 * np.linalg.norm(a)


def test_svd_rejects_empty():
    with pytest.raises(ValueError):
        linalg.svd(np.zeros((0, 3)))


def test_svd_convergence_cap_is_explicit(rng):
    with pytest.raises(linalg.SvdConvergenceError):
        linalg.svd(rng.standard_normal((6, 5)), max_sweeps=1)


def test_pinv_diagonal():
    assert np.allclose(linalg.pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))


def test_pinv_identity():
    assert np.allclose(linalg.pinv(np.eye(4)), np.eye(4))


def test_pinv_full_column_rank_matches_normal_equations(rng):
    a = rng.standard_normal((5, 3))
    expected = np.linalg.solve(a.T @ a, a.T)
    assert np.allclose(linalg.pinv(a), expected, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(
    rows=st.integers(min_value=1, max_value=10),
    cols=st.integers(min_value=1, max_value=10),
    rank=st.integers(min_value=1, max_value=4),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_pinv_penrose_identities(rows, cols, rank, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((rows, rank)) @ rng.standard_normal((rank, cols))
    p = linalg.pinv(a)
    scale = np.linalg.norm(a)
    assert np.linalg.norm(a @ p @ a - a) <= 1e-8 * scale
    assert np.linalg.norm(p @ a @ p - p) <= 1e-8 * np.linalg.norm(p)
    assert np.linalg.norm(a @ p - (a @ p).T) <= 1e-8
    assert np.linalg.norm(p @ a - (p @ a).T) <= 1e-8


def test_pinv_rejects_negative_tolerance():
    with pytest.raises(ValueError, match="tol"):
        linalg.pinv(np.eye(2), tol=-1.0)


def test_truncate_rank_k_diagonal():
    result = linalg.truncate_rank_k(np.diag([3.0, 2.0, 1.0]), 2)
    assert np.allclose(result, np.diag([3.0, 2.0, 0.0]), atol=1e-14)


def test_truncate_rank_k_returns_input_when_k_covers_rank(rng):
    a = rng.standard_normal((4, 6))
    assert np.array_equal(linalg.truncate_rank_k(a, 4), a)
    assert np.array_equal(linalg.truncate_rank_k(a, 10), a)


@settings(max_examples=100, deadline=None)
@given(MATRICES, st.integers(min_value=1, max_value=12))
def test_truncate_rank_k_residual_is_the_spectral_tail(a, k):
    sigma = np.linalg.svd(a, compute_uv=False)
    residual = np.linalg.norm(a - linalg.truncate_rank_k(a, k))
    assert residual == pytest.approx(np.sqrt(np.sum(sigma[k:] ** 2)), abs=1e-8 * (1 + np.linalg.norm(a)))


def test_truncate_rank_k_beats_random_competitors(rng):
    a = rng.standard_normal((6, 5))
    best = np.linalg.norm(a - linalg.truncate_rank_k(a, 2))
    for _ in range(200):
        b = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 5))
        assert best <= np.linalg.norm(a - b) + 1e-12


def test_norms_of_identity_and_zero():
    assert linalg.frobenius_norm(np.eye(3)) == pytest.approx(np.sqrt(3))
    assert linalg.spectral_norm(np.eye(3)) == pytest.approx(1.0)
    assert linalg.frobenius_norm(np.zeros((2, 3))) == 0.0
    assert linalg.spectral_norm(np.zeros((2, 3))) == 0.0


def test_norm_equivalence(rng):
    a = rng.standard_normal((4, 6))
    spectral, frobenius = linalg.spectral_norm(a), linalg.frobenius_norm(a)
    assert spectral == pytest.approx(np.linalg.norm(a, 2), rel=1e-8)
    assert spectral <= frobenius <= np.sqrt(4) * spectral


def test_pythagorean_property(rng):
    for _ in range(100):
        q = np.linalg.qr(rng.standard_normal((10, 6)))[0]
        a = q[:, :3] @ rng.standard_normal((3, 5))
        b = q[:, 3:] @ rng.standard_normal((3, 5))
        lhs = linalg.frobenius_norm(a + b) ** 2
        rhs = linalg.frobenius_norm(a) ** 2 + linalg.frobenius_norm(b) ** 2
        assert lhs == pytest.approx(rhs, rel=1e-8)


def test_weyl_perturbation(rng):
    for _ in range(100):
        p = rng.standard_normal((7, 5))
        q = 0.1 * rng.standard_normal((7, 5))
        shift = np.max(np.abs(linalg.svd(p + q).sigma - linalg.svd(p).sigma))
        assert shift <= linalg.spectral_norm(q) + 1e-8


def test_pinv_product_rule_with_orthonormal_left_factor(rng):
    for _ in range(20):
        a = np.linalg.qr(rng.standard_normal((8, 4)))[0]
        b = rng.standard_normal((4, 6))
        assert np.allclose(linalg.pinv(a @ b), linalg.pinv(b) @ linalg.pinv(a), atol=1e-8)


def test_least_singular_value_bounds(rng):
    for _ in range(20):
        c = rng.standard_normal((9, 4))
        b = rng.standard_normal((4, 3))
        sigma = linalg.svd(c).sigma
        norm = linalg.frobenius_norm(c @ b)
        assert sigma[-1] * linalg.frobenius_norm(b) <= norm + 1e-10
        assert norm <= sigma[0] * linalg.frobenius_norm(b) + 1e-10


def test_matrix_file_roundtrip(tmp_path, rng):
    a = rng.standard_normal((3, 4))
    path = tmp_path / "a.mat"
    linalg.write_matrix(path, a)
    assert np.array_equal(linalg.read_matrix(path), a)


def test_read_matrix_rejects_count_mismatch(tmp_path):
    path = tmp_path / "bad.mat"
    path.write_text("2 2\n1 2 3\n")
    with pytest.raises(ValueError, match="expected 4 values"):
        linalg.read_matrix(path)


def test_vector_file_roundtrip(tmp_path):
    path = tmp_path / "sigma.vec"
    linalg.write_vector(path, [3.0, 2.0, 0.5])
    assert np.array_equal(linalg.read_vector(path), [3.0, 2.0, 0.5])
