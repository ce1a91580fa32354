"""Gauss networks: distance-based confidence around k-means-optimal centroids.

The softmax layer is replaced by centroids ``C`` in the penultimate space.
The confidence of class ``k`` is ``exp(-||f_p(x) - C_k||^2)``, left
unnormalized so that points far from every centroid get a low score for
every class. :func:`tailor_network` refines the hidden layers so that the
training points move close to their class centroid.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np
from numpy.typing import ArrayLike

from gaussnet.base import (
    DimensionMismatchError,
    EmptyClassError,
    NonFiniteLossError,
    PartitionMatrix,
    Vector,
    as_matrix,
)
from gaussnet.config import RefreshPolicy, TailorConfig
from gaussnet.data import LabeledDataset
from gaussnet.geometry import CentroidSystem, Provenance, squared_distances
from gaussnet.network import LossKind, NetworkModel, backward, forward_penultimate
from gaussnet.training import minibatches

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaussHead:
    centroids: CentroidSystem
    outlier_threshold: Optional[float] = None

    def __post_init__(self) -> None:
        threshold = self.outlier_threshold
        if threshold is None:
            threshold = 1.0 / self.centroids.classes
        if not 0.0 < threshold <= 1.0:
            raise ValueError(f"outlier threshold must lie in (0, 1], got {threshold}")
        object.__setattr__(self, "outlier_threshold", float(threshold))

    @property
    def classes(self) -> int:
        return self.centroids.classes


class GaussPrediction(NamedTuple):
    class_index: int
    confidence: float
    outlier: bool


class GaussPredictions(NamedTuple):
    classes: np.ndarray
    confidences: np.ndarray
    outliers: np.ndarray


class RankedSample(NamedTuple):
    sample_id: int
    predicted_class: int
    confidence: float
    outlier: bool


class Ranking(NamedTuple):
    prototypes: List[RankedSample]
    outliers: List[RankedSample]


class ReachabilityGaps(NamedTuple):
    """Per class: closest approach of a member to its centroid, and the farthest"""

    gaps: np.ndarray
    radii: np.ndarray


@dataclass
class TailoringResult:
    model: NetworkModel
    head: GaussHead
    refresh_losses: List[float] = field(default_factory=list)
    epoch_losses: List[float] = field(default_factory=list)
    backtracks: int = 0
    final_loss: float = math.nan


def _distances(head: GaussHead, fp: ArrayLike) -> np.ndarray:
    """``c x m`` squared distances"""
    points = np.asarray(fp, dtype=np.float64)
    return squared_distances(points.reshape(points.shape[0], -1), head.centroids).T


def gauss_confidence(head: GaussHead, fp: ArrayLike) -> np.ndarray:
    """``kappa_k = exp(-||fp - C_k||^2)`` per class, in (0, 1] up to underflow"""
    kappa = np.exp(-_distances(head, fp))
    return kappa[:, 0] if np.ndim(fp) == 1 else kappa


def predict_gauss_batch(head: GaussHead, fp: ArrayLike) -> GaussPredictions:
    distances = _distances(head, fp)
    classes = np.argmin(distances, axis=0)
    confidences = np.exp(-distances[classes, np.arange(distances.shape[1])])
    return GaussPredictions(classes, confidences, confidences < head.outlier_threshold)


def predict_gauss(head: GaussHead, fp: Vector) -> GaussPrediction:
    """Nearest centroid, its confidence and the outlier flag.

    The class is taken as the argmin of the distances rather than the argmax
    of the confidences, which may underflow to zero together.
    """
    if np.ndim(fp) != 1:
        raise DimensionMismatchError(
            np.shape(fp), (head.centroids.dim,), "single point"
        )
    predictions = predict_gauss_batch(head, fp)
    return GaussPrediction(
        int(predictions.classes[0]),
        float(predictions.confidences[0]),
        bool(predictions.outliers[0]),
    )


def kmeans_centroid_update(
    fp_matrix: ArrayLike, labels: PartitionMatrix
) -> CentroidSystem:
    """``C = f_p(X) Y (Y^T Y)^-1``: the per-class means of the columns"""
    fp = as_matrix(fp_matrix, "penultimate outputs")
    if fp.shape[1] != len(labels):
        raise DimensionMismatchError(fp.shape, (len(labels),), "outputs and labels")
    counts = labels.counts()
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyClassError(int(empty[0]))
    return CentroidSystem(fp @ labels.dense() / counts, Provenance.KMEANS_OPTIMAL)


def tailoring_loss(
    fp_matrix: ArrayLike, labels: PartitionMatrix, centroids: CentroidSystem
) -> float:
    """``||f_p(X)^T - Y C^T||^2``"""
    fp = as_matrix(fp_matrix, "penultimate outputs")
    if fp.shape[0] != centroids.dim or fp.shape[1] != len(labels):
        raise DimensionMismatchError(fp.shape, (centroids.dim, len(labels)), "outputs")
    residual = fp - centroids.centroids[:, labels.assignments]
    return float(np.sum(residual * residual))


def _gradient_epoch(
    model: NetworkModel,
    data: LabeledDataset,
    centroids: CentroidSystem,
    batches: List[np.ndarray],
    learning_rate: float,
) -> Optional[NetworkModel]:
    """One pass of plain SGD on the tailoring loss, ``None`` if it diverged"""
    weights = [np.array(layer.weight) for layer in model.layers]
    current = model
    with np.errstate(over="ignore", invalid="ignore"):
        for batch in batches:
            gradients = backward(
                current,
                data.features[:, batch],
                data.labels.take(batch),
                LossKind.TAILORING,
                centroids.centroids,
            )
            if not math.isfinite(gradients.loss):
                return None
            scale = learning_rate / len(batch)
            for w, g in zip(weights, gradients.weights):
                w -= scale * g
            if not all(np.all(np.isfinite(w)) for w in weights):
                return None
            current = model.with_weights(weights)
    return current


def tailor_network(
    model: NetworkModel, data: LabeledDataset, config: TailorConfig
) -> TailoringResult:
    """Alternate the closed-form centroid update with gradient epochs.

    Also known as the Gauss-network refinement. The final layer is left
    untouched; predictions of the result go through the returned head.

    An epoch that would end above the loss it started from is undone and
    retried with half the learning rate, at most ``max_backtracks`` times.
    With ``centroid_refresh=epoch`` the centroids are refreshed before every
    epoch after the first and once more at the end.
    """
    rng = np.random.default_rng(config.seed)
    current = model
    fp = forward_penultimate(current, data.features)
    centroids = kmeans_centroid_update(fp, data.labels)
    reference = tailoring_loss(fp, data.labels, centroids)
    if not math.isfinite(reference):
        raise NonFiniteLossError(0, 0, reference)
    result = TailoringResult(current, GaussHead(centroids), refresh_losses=[reference])
    logger.info("initial tailoring loss %.6f", reference)

    every_epoch = config.centroid_refresh is RefreshPolicy.EVERY_EPOCH
    for epoch in range(config.epochs):
        if every_epoch and epoch > 0:
            centroids = kmeans_centroid_update(fp, data.labels)
            reference = tailoring_loss(fp, data.labels, centroids)
            result.refresh_losses.append(reference)
            logger.debug(
                "epoch %d: refreshed centroids, loss %.6f", epoch + 1, reference
            )

        batches = minibatches(data.size, config.batch_size, rng)
        learning_rate = config.learning_rate
        diverged = False
        for attempt in range(config.max_backtracks + 1):
            candidate = _gradient_epoch(
                current, data, centroids, batches, learning_rate
            )
            diverged = candidate is None
            if candidate is not None:
                candidate_fp = forward_penultimate(candidate, data.features)
                loss = tailoring_loss(candidate_fp, data.labels, centroids)
                if loss <= reference:
                    current, fp, reference = candidate, candidate_fp, loss
                    break
            result.backtracks += 1
            learning_rate /= 2
            logger.debug(
                "epoch %d: backtracking to learning rate %.3g", epoch + 1, learning_rate
            )
        else:
            if diverged:
                raise NonFiniteLossError(epoch, attempt, float("nan"))
            logger.warning(
                "epoch %d: no descent after %d backtracks", epoch + 1, attempt + 1
            )

        result.epoch_losses.append(reference)
        logger.info("epoch %d: tailoring loss %.6f", epoch + 1, reference)

    if every_epoch:
        centroids = kmeans_centroid_update(fp, data.labels)
        result.refresh_losses.append(tailoring_loss(fp, data.labels, centroids))
    result.model = current
    result.head = GaussHead(centroids)
    result.final_loss = tailoring_loss(fp, data.labels, centroids)
    return result


def _entry(index: int, predictions: GaussPredictions) -> RankedSample:
    return RankedSample(
        index,
        int(predictions.classes[index]),
        float(predictions.confidences[index]),
        bool(predictions.outliers[index]),
    )


def _rank(order: np.ndarray, k: int, predictions: GaussPredictions) -> Ranking:
    return Ranking(
        [_entry(i, predictions) for i in order[:k]],
        [_entry(i, predictions) for i in order[::-1][:k]],
    )


def rank_samples(
    head: GaussHead, fp: ArrayLike, k: int, per_class: bool = False
) -> Ranking:
    """Prototypes (highest confidence first) and outliers (lowest first).

    Ordering uses the distance to the predicted centroid, so samples whose
    confidences underflow to zero are still ranked. With ``per_class`` the
    lists hold up to ``k`` samples of every predicted class, class by class.
    """
    if k < 0:
        raise ValueError(f"k must not be negative, got {k}")
    distances = _distances(head, fp)
    predictions = predict_gauss_batch(head, fp)
    nearest = distances[predictions.classes, np.arange(distances.shape[1])]
    ids = np.arange(nearest.shape[0])
    order = np.lexsort((ids, nearest))
    if not per_class:
        return _rank(order, k, predictions)
    ranking = Ranking([], [])
    for class_index in range(head.classes):
        members = order[predictions.classes[order] == class_index]
        part = _rank(members, k, predictions)
        ranking.prototypes.extend(part.prototypes)
        ranking.outliers.extend(part.outliers)
    return ranking


def reachability_gaps(
    head: GaussHead, fp: ArrayLike, labels: PartitionMatrix
) -> ReachabilityGaps:
    """Training-set estimate of ``min_x ||f_p(x) - C_k||`` per class.

    Classes without members get NaN.
    """
    distances = np.sqrt(_distances(head, fp))
    if distances.shape[1] != len(labels):
        raise DimensionMismatchError(
            distances.shape, (len(labels),), "outputs and labels"
        )
    own = distances[labels.assignments, np.arange(len(labels))]
    gaps = np.full(head.classes, np.nan)
    radii = np.full(head.classes, np.nan)
    for class_index in range(head.classes):
        members = own[labels.assignments == class_index]
        if members.size:
            gaps[class_index] = members.min()
            radii[class_index] = members.max()
    return ReachabilityGaps(gaps, radii)
