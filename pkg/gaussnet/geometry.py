"""Softmax prediction as k-means assignment in the penultimate space.

Adding one vector ``v`` to every column of the last-layer weight ``W`` does
not change the argmax of ``f_p(x)^T W``. Choosing ``v`` so that all columns
``Z_k = W_k + v`` have the same norm turns the argmax of inner products into
the argmin of distances: the network assigns every point to its nearest
centroid, and the classes are convex cones around the centroid directions.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.spatial.distance import cdist

from gaussnet.base import (
    BoundViolationError,
    DenseMatrix,
    DimensionMismatchError,
    PartitionMatrix,
    PrototypeError,
    ResidualError,
    SameClassError,
    Vector,
    as_matrix,
)
from gaussnet.network import (
    LossKind,
    NetworkModel,
    backward,
    forward_penultimate,
    lipschitz_upper_bound,
    softmax,
)
from gaussnet.numerics import euclidean_norm, least_squares_solve

EQUIDISTANCE_TOL = 1e-9


class Provenance(Enum):
    FROM_WEIGHTS = 0
    KMEANS_OPTIMAL = 1


@dataclass(frozen=True, eq=False)
class CentroidSystem:
    """Class centroids as the columns of a ``d x c`` matrix"""

    centroids: DenseMatrix
    provenance: Provenance
    shift: Optional[Vector] = None
    residual: float = 0.0

    def __post_init__(self) -> None:
        centroids = as_matrix(self.centroids, "centroids").copy(order="F")
        centroids.setflags(write=False)
        object.__setattr__(self, "centroids", centroids)
        if self.shift is not None:
            shift = np.array(self.shift, dtype=np.float64)
            if shift.shape != (centroids.shape[0],):
                raise DimensionMismatchError(
                    shift.shape, centroids.shape, "shift and centroids"
                )
            object.__setattr__(self, "shift", shift)

    @property
    def dim(self) -> int:
        return self.centroids.shape[0]

    @property
    def classes(self) -> int:
        return self.centroids.shape[1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.centroids, axis=0)

    def norm_spread(self) -> float:
        """``max_k | ||Z_k|| - ||Z_1|| | / ||Z_1||``"""
        norms = self.norms()
        if norms[0] == 0.0:
            return float(np.max(norms))
        return float(np.max(np.abs(norms - norms[0])) / norms[0])


@dataclass(frozen=True)
class DistortionBound:
    """Lower bound on the input distortion that moves a point between classes.

    Negative bounds are vacuous and returned as they are.
    """

    lower_bound: float
    centroid_separation: float
    source_gap: float
    target_gap: float
    lipschitz: float
    source_class: int
    target_class: int

    @property
    def vacuous(self) -> bool:
        return self.lower_bound <= 0.0

    def holds(self, distortion: float) -> bool:
        return distortion >= self.lower_bound


@dataclass
class EquivalenceReport:
    points: int
    matches: int
    residual: float
    norm_spread: float
    ties: List[int] = field(default_factory=list)
    mismatches: List[int] = field(default_factory=list)

    @property
    def match_fraction(self) -> float:
        """Fraction of matching points among the non-tied ones"""
        decided = self.points - len(self.ties)
        return self.matches / decided if decided else 1.0

    @property
    def passed(self) -> bool:
        return not self.mismatches


class Prototype(NamedTuple):
    point: Vector
    gap: float


def shift_system(w: ArrayLike) -> Tuple[DenseMatrix, Vector]:
    """Rows ``2 (W_1 - W_l)^T``, right-hand sides ``||W_l||^2 - ||W_1||^2``, l = 2..c.

    Expanding ``||W_1 + v||^2 = ||W_l + v||^2`` gives exactly this sign.
    """
    weights = as_matrix(w, "weights")
    squared = np.einsum("ij,ij->j", weights, weights)
    a = 2.0 * (weights[:, :1] - weights[:, 1:]).T
    b = squared[1:] - squared[0]
    return np.asfortranarray(a), b


def equidistant_centroids(
    w: ArrayLike, tol: float = EQUIDISTANCE_TOL
) -> CentroidSystem:
    """Centroids ``Z = W + v 1^T`` with equal column norms.

    ``v`` is the minimum-norm solution of the ``c - 1`` equations of
    :func:`shift_system`; it exists whenever ``d >= c - 1`` and the columns
    of ``W`` are affinely independent.
    """
    weights = as_matrix(w, "weights")
    d, c = weights.shape
    if d < c - 1:
        raise DimensionMismatchError(
            weights.shape, (c - 1, c), "weights (need d >= c - 1)"
        )
    a, b = shift_system(weights)
    solution = least_squares_solve(a, b)
    if solution.residual > tol * (1.0 + euclidean_norm(b)):
        raise ResidualError(solution.residual, tol * (1.0 + euclidean_norm(b)))
    return CentroidSystem(
        centroids=weights + solution.x[:, None],
        provenance=Provenance.FROM_WEIGHTS,
        shift=solution.x,
        residual=solution.residual,
    )


def squared_distances(points: ArrayLike, centroids: CentroidSystem) -> np.ndarray:
    """``m x c`` table of squared distances between point columns and centroids"""
    matrix = as_matrix(points, "points")
    if matrix.shape[0] != centroids.dim:
        raise DimensionMismatchError(
            matrix.shape, centroids.centroids.shape, "points and centroids"
        )
    return cdist(matrix.T, centroids.centroids.T, "sqeuclidean")


def kmeans_assign(points: ArrayLike, centroids: CentroidSystem) -> PartitionMatrix:
    """Nearest-centroid assignment, ties going to the lowest class index.

    Solves ``argmin_Y ||f_p(X)^T - Y Z^T||^2`` over partition matrices: the
    objective separates over rows, so every row picks its nearest centroid.
    """
    distances = squared_distances(points, centroids)
    return PartitionMatrix(np.argmin(distances, axis=1), centroids.classes)


def verify_equivalence(
    model: NetworkModel, points: ArrayLike, tie_tol: float = EQUIDISTANCE_TOL
) -> EquivalenceReport:
    """Compare softmax argmax with nearest-centroid assignment point by point.

    A point whose two largest logits differ by at most ``tie_tol`` (relative
    to the largest logit magnitude, at least 1) is listed as a tie and does
    not count as a mismatch.
    """
    centroids = equidistant_centroids(model.head_weight)
    fp = forward_penultimate(model, as_matrix(points, "points"))
    scores = model.head_weight.T @ fp
    assigned = kmeans_assign(fp, centroids).assignments
    predicted = np.argmax(scores, axis=0)

    if centroids.classes > 1:
        top_two = np.sort(scores, axis=0)[-2:]
        margin = tie_tol * np.maximum(1.0, np.max(np.abs(scores), axis=0))
        tied = (top_two[1] - top_two[0]) <= margin
    else:
        tied = np.zeros(scores.shape[1], dtype=bool)

    ties = np.flatnonzero(tied).tolist()
    mismatches = np.flatnonzero(~tied & (assigned != predicted)).tolist()
    decided = scores.shape[1] - len(ties)
    return EquivalenceReport(
        points=scores.shape[1],
        matches=decided - len(mismatches),
        residual=centroids.residual,
        norm_spread=centroids.norm_spread(),
        ties=ties,
        mismatches=mismatches,
    )


def shifted_softmax(fp: ArrayLike, centroids: CentroidSystem) -> np.ndarray:
    """``exp(f_p^T Z_k) / sum_l exp(f_p^T Z_l)``, equal to the softmax of the logits"""
    if centroids.provenance is not Provenance.FROM_WEIGHTS:
        raise ValueError(
            "shifted softmax needs centroids built from the last-layer weights"
        )
    return softmax(centroids.centroids.T @ np.asarray(fp, dtype=np.float64))


def _nearest(fp: Vector, centroids: CentroidSystem) -> int:
    return int(kmeans_assign(fp.reshape(-1, 1), centroids).assignments[0])


def min_distortion_bound(
    model: NetworkModel,
    x: ArrayLike,
    x_attacked: ArrayLike,
    centroids: CentroidSystem,
    lipschitz: float,
) -> DistortionBound:
    """``(||Z_l - Z_k|| - ||f_p(x~) - Z_l|| - ||f_p(x) - Z_k||) / L_p``.

    Classes are the nearest centroids of ``f_p(x)`` and ``f_p(x~)``. Any
    upper bound on the Lipschitz modulus of ``f_p`` keeps the bound valid.
    """
    if lipschitz <= 0:
        raise ValueError(f"Lipschitz bound must be positive, got {lipschitz}")
    fp_source = forward_penultimate(model, x)
    fp_target = forward_penultimate(model, x_attacked)
    k, l = _nearest(fp_source, centroids), _nearest(fp_target, centroids)
    if k == l:
        raise SameClassError(f"both points are assigned to class {k}")
    z = centroids.centroids
    separation = euclidean_norm(z[:, l] - z[:, k])
    source_gap = euclidean_norm(fp_source - z[:, k])
    target_gap = euclidean_norm(fp_target - z[:, l])
    return DistortionBound(
        lower_bound=(separation - target_gap - source_gap) / lipschitz,
        centroid_separation=separation,
        source_gap=source_gap,
        target_gap=target_gap,
        lipschitz=lipschitz,
        source_class=k,
        target_class=l,
    )


def prototype_gap_bound(
    model: NetworkModel,
    x: ArrayLike,
    prototype: ArrayLike,
    centroid_index: int,
    lipschitz: float,
    centroids: CentroidSystem,
    tol: float = 1e-3,
) -> float:
    """``L_p ||x - z_k||``, bounding ``||f_p(x) - Z_k||`` up to the prototype gap"""
    z = centroids.centroids[:, centroid_index]
    prototype_gap = euclidean_norm(forward_penultimate(model, prototype) - z)
    if prototype_gap > tol:
        raise PrototypeError(prototype_gap, tol)
    offset = np.asarray(x, dtype=np.float64) - np.asarray(prototype)
    bound = lipschitz * euclidean_norm(offset)
    gap = euclidean_norm(forward_penultimate(model, x) - z)
    if gap > bound + prototype_gap + 1e-12 * (1.0 + bound):
        raise BoundViolationError(bound, gap)
    return bound


def find_prototype(
    model: NetworkModel,
    centroids: CentroidSystem,
    centroid_index: int,
    seed: int,
    steps: int = 500,
    tol: float = 1e-3,
    learning_rate: Optional[float] = None,
) -> Prototype:
    """Gradient descent on ``||f_p(z) - Z_k||^2`` from a seeded Gaussian start.

    The default step ``1 / (2 L_p^2)`` is the inverse smoothness constant of
    the objective when ``f_p`` is linear.
    """
    if learning_rate is None:
        lipschitz = lipschitz_upper_bound(model, penultimate=True)
        learning_rate = 0.5 / max(lipschitz**2, 1e-12)
    target = PartitionMatrix(np.array([centroid_index]), centroids.classes)
    z = np.random.default_rng(seed).standard_normal(model.input_dim)
    gap = np.inf
    for _ in range(steps):
        gradients = backward(model, z, target, LossKind.TAILORING, centroids.centroids)
        gap = float(np.sqrt(gradients.loss))
        if gap <= tol:
            break
        z = z - learning_rate * gradients.inputs[:, 0]
    target_point = centroids.centroids[:, centroid_index]
    gap = euclidean_norm(forward_penultimate(model, z) - target_point)
    if gap > tol:
        raise PrototypeError(gap, tol)
    return Prototype(z, gap)
