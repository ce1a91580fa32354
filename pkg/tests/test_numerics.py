import numpy as np
import pytest

from gaussnet.base import ConvergenceError, DimensionMismatchError
from gaussnet.numerics import (
    euclidean_norm,
    frobenius_norm,
    least_squares_solve,
    matmul,
    spectral_norm,
)


def test_matmul_shapes():
    product = matmul(np.ones((2, 3)), np.ones((3, 4)))
    assert product.shape == (2, 4)
    assert product.flags.f_contiguous
    assert np.all(product == 3.0)


def test_matmul_mismatch():
    with pytest.raises(DimensionMismatchError) as info:
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    assert info.value.left == (2, 3)


def test_lstsq_minimum_norm_underdetermined():
    solution = least_squares_solve([[1.0, 1.0]], [2.0])
    np.testing.assert_allclose(solution.x, [1.0, 1.0], atol=1e-12)
    assert solution.residual < 1e-12
    assert solution.rank == 1


def test_lstsq_square_system():
    a = np.array([[2.0, 1.0], [1.0, 3.0]])
    solution = least_squares_solve(a, [3.0, 5.0])
    np.testing.assert_allclose(a @ solution.x, [3.0, 5.0], atol=1e-12)


def test_lstsq_inconsistent_reports_residual():
    solution = least_squares_solve([[1.0], [1.0]], [0.0, 2.0])
    np.testing.assert_allclose(solution.x, [1.0])
    assert solution.residual == pytest.approx(np.sqrt(2.0))


def test_lstsq_rank_deficient_min_norm():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((3, 2)) @ rng.standard_normal((2, 5))
    b = a @ rng.standard_normal(5)
    solution = least_squares_solve(a, b, rcond=1e-10)
    expected = np.linalg.pinv(a) @ b
    np.testing.assert_allclose(solution.x, expected, atol=1e-9)
    assert solution.rank == 2


def test_lstsq_empty_system():
    solution = least_squares_solve(np.zeros((0, 3)), np.zeros(0))
    assert np.all(solution.x == 0.0)


def test_lstsq_rejects_nan():
    with pytest.raises(ValueError):
        least_squares_solve([[np.nan]], [1.0])


@pytest.mark.parametrize("seed", range(5))
def test_spectral_norm_matches_svd(seed):
    a = np.random.default_rng(seed).standard_normal((6, 4))
    assert spectral_norm(a) == pytest.approx(np.linalg.norm(a, 2), rel=1e-8)


def test_spectral_norm_diagonal():
    assert spectral_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0)


def test_spectral_norm_zero_matrix():
    assert spectral_norm(np.zeros((3, 3))) == 0.0


def test_spectral_norm_start_in_null_space():
    a = np.array([[1.0, -1.0], [2.0, -2.0]])
    assert spectral_norm(a) == pytest.approx(np.linalg.norm(a, 2), rel=1e-10)


def test_spectral_norm_empty():
    with pytest.raises(ValueError):
        spectral_norm(np.zeros((0, 2)))


def test_spectral_norm_iteration_budget():
    with pytest.raises(ConvergenceError) as info:
        spectral_norm(np.diag([2.0, 1.0]), max_iter=1)
    assert info.value.gap > 0


def test_norms():
    assert euclidean_norm([3.0, 4.0]) == 5.0
    assert frobenius_norm([[1.0, 1.0], [1.0, 1.0]]) == 2.0


@pytest.mark.parametrize("seed", range(20))
def test_matmul_is_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.standard_normal(shape) for shape in [(4, 6), (6, 3), (3, 5)])
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    assert np.linalg.norm(left - right) <= 1e-9 * np.linalg.norm(left)


@pytest.mark.parametrize("gap", [1e-2, 1e-4, 1e-5, 3e-6, 1e-6, 1e-7, 1e-9, 1e-13])
def test_spectral_norm_close_singular_values(gap):
    sigma = spectral_norm(np.diag([1.0, 1.0 - gap]))
    assert 1.0 <= sigma <= 1.0 + 1e-12


def test_spectral_norm_start_on_minor_eigenvector():
    # all-ones is an eigenvector of A^T A for the eigenvalue 2, the top one is 8
    a = np.array([[2.0, -2.0], [1.0, 1.0]])
    assert spectral_norm(a) == pytest.approx(np.sqrt(8.0), rel=1e-12)


@pytest.mark.parametrize("seed", range(30))
def test_spectral_norm_sandwich(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((int(rng.integers(1, 9)), int(rng.integers(1, 9))))
    sigma = spectral_norm(a)
    assert sigma >= np.linalg.norm(a, 2) * (1 - 1e-14)
    assert sigma <= frobenius_norm(a) * (1 + 1e-14)
    for v in rng.standard_normal((20, a.shape[1])):
        assert sigma >= euclidean_norm(a @ v) / euclidean_norm(v) * (1 - 1e-14)
