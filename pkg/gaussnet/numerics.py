"""Dense linear algebra shared by every other module.

All routines take and return float64 arrays; matrices are column-major so
data points and centroids are contiguous columns.
"""
import math
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike

from gaussnet.base import (
    ConvergenceError,
    DenseMatrix,
    DimensionMismatchError,
    Vector,
    as_matrix,
    as_vector,
)


_MAX_SQUARINGS = 64


class LeastSquaresSolution(NamedTuple):
    x: Vector
    residual: float
    rank: int


def matmul(a: ArrayLike, b: ArrayLike) -> DenseMatrix:
    left = as_matrix(a, "left operand")
    right = as_matrix(b, "right operand")
    if left.shape[1] != right.shape[0]:
        raise DimensionMismatchError(left.shape, right.shape, "matmul operands")
    return np.asfortranarray(left @ right)


def least_squares_solve(
    a: ArrayLike, b: ArrayLike, rcond: Optional[float] = None
) -> LeastSquaresSolution:
    """Minimum-norm minimiser of ``||Ax - b||``.

    Uses LAPACK ``xGELSY`` (QR with column pivoting followed by a complete
    orthogonal factorisation), so rank-deficient and underdetermined systems
    get the minimum-norm solution. Inconsistency is not an error, it shows
    up in ``residual``.
    """
    matrix = as_matrix(a, "coefficient matrix")
    rhs = as_vector(b, "right-hand side")
    if matrix.shape[0] != rhs.shape[0]:
        raise DimensionMismatchError(matrix.shape, rhs.shape, "system")
    if matrix.shape[0] == 0:
        return LeastSquaresSolution(np.zeros(matrix.shape[1]), 0.0, 0)

    x, _, rank, _ = scipy.linalg.lstsq(matrix, rhs, cond=rcond, lapack_driver="gelsy")
    residual = euclidean_norm(matrix @ x - rhs)
    return LeastSquaresSolution(np.asarray(x, dtype=np.float64), residual, int(rank))


def spectral_norm(a: ArrayLike, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration on ``A^T A``, rounded up.

    The iteration stops once the eigen-residual ``||Gv - lambda v||`` of the
    Gram matrix ``G`` drops to ``tol * lambda``. The result is
    ``sqrt(lambda + residual)``, capped by the Frobenius norm: it lies above
    ``sigma_max`` and within a relative ``tol`` of it.

    Starts from the normalised all-ones vector. When the estimate leaves room
    in the trace of ``G`` for a larger eigenvalue, a second pass from a seeded
    Gaussian vector covers a start that was orthogonal to the dominant
    eigenvector.
    """
    matrix = as_matrix(a)
    if matrix.size == 0:
        raise ValueError("spectral norm of an empty matrix")
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")

    gram = matrix.T @ matrix
    trace = float(np.trace(gram))
    if trace == 0.0:
        return 0.0
    cols = gram.shape[0]
    estimate = _dominant_eigenvalue(gram, np.ones(cols), tol, max_iter)
    if trace - estimate > estimate:
        start = np.random.default_rng(0).standard_normal(cols)
        estimate = max(estimate, _dominant_eigenvalue(gram, start, tol, max_iter))
    return math.sqrt(min(estimate, trace))


def _dominant_eigenvalue(
    gram: DenseMatrix, start: Vector, tol: float, max_iter: int
) -> float:
    # Squaring the working matrix whenever a step fails to halve the residual
    # keeps clustered leading eigenvalues from stalling the iteration.
    floor = 4 * gram.shape[0] * np.finfo(np.float64).eps
    work = gram
    squarings = 0
    v = start / euclidean_norm(start)
    previous = math.inf
    gap = math.inf
    for _ in range(max_iter):
        w = gram @ v
        estimate = float(v @ w)
        residual = euclidean_norm(w - estimate * v)
        if residual <= max(tol, floor) * estimate:
            return estimate + residual + floor * estimate
        gap = residual / estimate
        if residual > 0.5 * previous and squarings < _MAX_SQUARINGS:
            work = work @ work
            work /= np.trace(work)
            squarings += 1
        previous = residual
        step = work @ v
        v = step / euclidean_norm(step)
    raise ConvergenceError(v, gap, max_iter)


def frobenius_norm(a: ArrayLike) -> float:
    return float(np.linalg.norm(as_matrix(a), "fro"))


def euclidean_norm(v: ArrayLike) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=np.float64).ravel()))
