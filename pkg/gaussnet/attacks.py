"""Adversarial evaluation of softmax and Gauss heads.

Two attacks are provided: the single-step fast gradient sign attack and the
one-pixel attack, searched either exhaustively over a value grid or by
differential evolution over the same grid.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.special
from numpy.typing import ArrayLike
from scipy.optimize import differential_evolution

from gaussnet.base import (
    GeometryError,
    NonFiniteGradientError,
    PartitionMatrix,
    SameClassError,
    Vector,
)
from gaussnet.config import CampaignConfig, HeadKind, SearchStrategy
from gaussnet.data import ImageGeometry, LabeledDataset
from gaussnet.geometry import (
    CentroidSystem,
    equidistant_centroids,
    min_distortion_bound,
    squared_distances,
)
from gaussnet.network import (
    LossKind,
    NetworkModel,
    backward,
    forward_penultimate,
    lipschitz_upper_bound,
    logits,
)
from gaussnet.numerics import euclidean_norm
from gaussnet.tailoring import GaussHead

logger = logging.getLogger(__name__)

Bounds = Optional[Tuple[float, float]]

CHUNK = 4096


def _as_columns(x: ArrayLike) -> np.ndarray:
    array = np.asarray(x, dtype=np.float64)
    return array.reshape(-1, 1) if array.ndim == 1 else array


class Classifier(ABC):
    """A network together with the head that turns ``f_p`` into classes"""

    kind: HeadKind

    def __init__(self, model: NetworkModel) -> None:
        self.model = model

    @property
    def classes(self) -> int:
        return self.model.class_count

    @property
    def outlier_threshold(self) -> float:
        return 1.0 / self.classes

    @abstractmethod
    def log_scores(self, x: ArrayLike) -> np.ndarray:
        """``c x m`` logarithms of the per-class confidences"""

    @abstractmethod
    def loss_gradient(self, x: ArrayLike, labels: PartitionMatrix) -> np.ndarray:
        """Gradient of the attacked loss with respect to the input columns"""

    @abstractmethod
    def centroids(self) -> CentroidSystem:
        """Centroids whose nearest-neighbour cells are the decision regions"""

    def confidences(self, x: ArrayLike) -> np.ndarray:
        return np.exp(self.log_scores(x))

    def predict(self, x: ArrayLike) -> np.ndarray:
        return np.argmax(self.log_scores(x), axis=0)

    def predict_with_confidence(self, x: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
        scores = self.log_scores(x)
        classes = np.argmax(scores, axis=0)
        return classes, np.exp(scores[classes, np.arange(scores.shape[1])])


class SoftmaxClassifier(Classifier):
    kind = HeadKind.SOFTMAX

    def log_scores(self, x: ArrayLike) -> np.ndarray:
        return scipy.special.log_softmax(logits(self.model, _as_columns(x)), axis=0)

    def loss_gradient(self, x: ArrayLike, labels: PartitionMatrix) -> np.ndarray:
        columns = _as_columns(x)
        return backward(self.model, columns, labels, LossKind.CROSS_ENTROPY).inputs

    def centroids(self) -> CentroidSystem:
        return equidistant_centroids(self.model.head_weight)


class GaussClassifier(Classifier):
    """Attacked loss is the squared distance to the true centroid, ``-log kappa``"""

    kind = HeadKind.GAUSS

    def __init__(self, model: NetworkModel, head: GaussHead) -> None:
        super().__init__(model)
        self.head = head

    @property
    def outlier_threshold(self) -> float:
        return self.head.outlier_threshold

    def log_scores(self, x: ArrayLike) -> np.ndarray:
        fp = forward_penultimate(self.model, _as_columns(x))
        return -squared_distances(fp, self.head.centroids).T

    def loss_gradient(self, x: ArrayLike, labels: PartitionMatrix) -> np.ndarray:
        return backward(
            self.model,
            _as_columns(x),
            labels,
            LossKind.TAILORING,
            self.head.centroids.centroids,
        ).inputs

    def centroids(self) -> CentroidSystem:
        return self.head.centroids


class PredictionSummary(NamedTuple):
    accuracy: float
    mean_confidence: float
    outlier_fraction: float
    n: int


def evaluate(classifier: Classifier, data: LabeledDataset) -> PredictionSummary:
    if data.size == 0:
        return PredictionSummary(float("nan"), float("nan"), float("nan"), 0)
    classes, confidence = classifier.predict_with_confidence(data.features)
    return PredictionSummary(
        accuracy=float(np.mean(classes == data.labels.assignments)),
        mean_confidence=float(np.mean(confidence)),
        outlier_fraction=float(np.mean(confidence < classifier.outlier_threshold)),
        n=data.size,
    )


def value_range(data: LabeledDataset) -> Tuple[float, float]:
    """Pixel range for image data, the observed feature range otherwise"""
    if data.geometry is not None:
        lo, hi = data.normalization.normalize([0.0, 255.0])
        return float(lo), float(hi)
    if data.size == 0:
        return 0.0, 1.0
    return float(data.features.min()), float(data.features.max())


def fgsm_perturb(
    classifier: Classifier,
    x: ArrayLike,
    labels: PartitionMatrix,
    epsilon: float,
    bounds: Bounds = None,
) -> np.ndarray:
    """``clip(x + eps * sign(grad_x loss), lo, hi)`` column by column"""
    if epsilon < 0:
        raise ValueError(f"epsilon must not be negative, got {epsilon}")
    points = _as_columns(x)
    gradient = classifier.loss_gradient(points, labels)
    if not np.all(np.isfinite(gradient)):
        raise NonFiniteGradientError("input gradient is not finite")
    attacked = points + epsilon * np.sign(gradient)
    if bounds is not None:
        attacked = np.clip(attacked, *bounds)
    return attacked


def fgsm_attack(
    classifier: Classifier,
    x: Vector,
    label: int,
    epsilon: float,
    bounds: Bounds = None,
) -> Vector:
    target = PartitionMatrix(np.array([label]), classifier.classes)
    return fgsm_perturb(classifier, x, target, epsilon, bounds)[:, 0]


class SweepRow(NamedTuple):
    epsilon: float
    accuracy: float
    mean_confidence: float
    successes: int


def fgsm_sweep(
    classifier: Classifier,
    data: LabeledDataset,
    epsilons: Sequence[float],
    bounds: Bounds = None,
) -> List[SweepRow]:
    """Accuracy under attack per step size.

    The confidence column is the mean confidence of the wrong class over the
    points the attack turned from correct to wrong, 0.0 when there are none.
    """
    if list(epsilons) != sorted(epsilons):
        raise ValueError("epsilons must be sorted ascending")
    clean = classifier.predict(data.features) == data.labels.assignments
    rows = []
    for epsilon in epsilons:
        attacked = fgsm_perturb(classifier, data.features, data.labels, epsilon, bounds)
        classes, confidence = classifier.predict_with_confidence(attacked)
        correct = classes == data.labels.assignments
        flipped = clean & ~correct
        rows.append(
            SweepRow(
                epsilon=float(epsilon),
                accuracy=float(np.mean(correct)) if data.size else float("nan"),
                mean_confidence=(
                    float(np.mean(confidence[flipped])) if flipped.any() else 0.0
                ),
                successes=int(flipped.sum()),
            )
        )
        logger.info(
            "%s fgsm eps=%.3f: accuracy %.4f",
            classifier.kind.value,
            epsilon,
            rows[-1].accuracy,
        )
    return rows


@dataclass(frozen=True)
class PixelBudget:
    geometry: ImageGeometry
    lo: float = 0.0
    hi: float = 1.0
    values: int = 16

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"empty value range [{self.lo}, {self.hi}]")
        if self.values < 1:
            raise ValueError(f"need at least one candidate value, got {self.values}")

    @property
    def positions(self) -> int:
        return self.geometry.height * self.geometry.width

    def grid(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.values)

    def apply(
        self, x: Vector, positions: np.ndarray, value_indices: np.ndarray
    ) -> np.ndarray:
        """Copies of ``x``, one column per candidate.

        Candidate ``j`` sets every channel ``ch`` of pixel ``positions[j]`` to
        ``grid[value_indices[j, ch]]``; features are laid out channel last.
        """
        channels = self.geometry.channels
        candidates = np.repeat(x.reshape(-1, 1), positions.shape[0], axis=1)
        columns = np.arange(positions.shape[0])
        grid = self.grid()
        for channel in range(channels):
            rows = positions * channels + channel
            candidates[rows, columns] = grid[value_indices[:, channel]]
        return candidates


@dataclass(frozen=True)
class PixelCandidate:
    position: int
    values: Tuple[float, ...]
    image: Vector
    attacked_class: int
    confidence: float


class _Scorer:
    """Scores candidates against the original prediction, keeping the worst success"""

    def __init__(
        self, classifier: Classifier, x: Vector, budget: PixelBudget, predicted: int
    ):
        self.classifier = classifier
        self.x = x
        self.budget = budget
        self.predicted = predicted
        self.best: Optional[PixelCandidate] = None
        self.best_score = -np.inf

    def margins(self, positions: np.ndarray, value_indices: np.ndarray) -> np.ndarray:
        candidates = self.budget.apply(self.x, positions, value_indices)
        scores = self.classifier.log_scores(candidates)
        own = scores[self.predicted].copy()
        scores[self.predicted] = -np.inf
        rival = np.max(scores, axis=0)
        scores[self.predicted] = own
        classes = np.argmax(scores, axis=0)
        success = np.flatnonzero(classes != self.predicted)
        if success.size:
            strongest = success[np.argmax(rival[success])]
            if rival[strongest] > self.best_score:
                self.best_score = float(rival[strongest])
                grid = self.budget.grid()
                self.best = PixelCandidate(
                    position=int(positions[strongest]),
                    values=tuple(float(grid[i]) for i in value_indices[strongest]),
                    image=candidates[:, strongest].copy(),
                    attacked_class=int(classes[strongest]),
                    confidence=float(np.exp(rival[strongest])),
                )
        return rival - own


def _exhaustive(scorer: _Scorer) -> None:
    budget = scorer.budget
    channels = budget.geometry.channels
    per_position = budget.values ** channels
    total = budget.positions * per_position
    for start in range(0, total, CHUNK):
        flat = np.arange(start, min(start + CHUNK, total))
        positions = flat // per_position
        value_indices = np.stack(
            np.unravel_index(flat % per_position, (budget.values,) * channels), axis=1
        )
        scorer.margins(positions, value_indices)


def _evolution(scorer: _Scorer, population: int, iterations: int, seed: int) -> None:
    budget = scorer.budget
    channels = budget.geometry.channels
    bounds = [(0, budget.positions - 1)] + [(0, budget.values - 1)] * channels

    def objective(genes: np.ndarray) -> np.ndarray:
        decoded = np.rint(np.atleast_2d(genes.T)).astype(np.int64)
        return -scorer.margins(decoded[:, 0], decoded[:, 1:])

    differential_evolution(
        objective,
        bounds,
        popsize=max(1, math.ceil(population / len(bounds))),
        maxiter=iterations,
        seed=seed,
        integrality=[True] * len(bounds),
        vectorized=True,
        updating="deferred",
        polish=False,
        tol=0.0,
    )


def one_pixel_attack(
    classifier: Classifier,
    x: Vector,
    budget: PixelBudget,
    strategy: SearchStrategy = SearchStrategy.EXHAUSTIVE,
    population: int = 32,
    iterations: int = 30,
    seed: int = 0,
) -> Optional[PixelCandidate]:
    """Most harmful single-pixel change that flips the prediction, if any.

    Harm is the confidence of the new class. The exhaustive search tries every
    pixel with every grid value per channel; the evolutionary search explores
    the same grid and so never finds an attack the exhaustive one misses.
    """
    image = np.asarray(x, dtype=np.float64)
    if (
        image.shape != (classifier.model.input_dim,)
        or budget.geometry.size != image.shape[0]
    ):
        raise GeometryError(
            f"image of {budget.geometry.size} values does not fit a model input of "
            f"{classifier.model.input_dim}"
        )
    predicted = int(classifier.predict(image)[0])
    scorer = _Scorer(classifier, image, budget, predicted)
    if strategy is SearchStrategy.EXHAUSTIVE:
        _exhaustive(scorer)
    else:
        _evolution(scorer, population, iterations, seed)
    return scorer.best


@dataclass(frozen=True)
class AttackRecord:
    sample_id: int
    head: HeadKind
    true_class: int
    pred_class: int
    attacked_class: int
    success: bool
    distortion_l2: float
    conf_before: float
    conf_after: float


@dataclass
class AttackReport:
    head: HeadKind
    records: List[AttackRecord] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def successes(self) -> List[AttackRecord]:
        return [record for record in self.records if record.success]

    @property
    def attack_rate(self) -> Optional[float]:
        """Successes over attempts, ``None`` for an empty report"""
        return len(self.successes) / self.n if self.records else None

    @property
    def mean_success_confidence(self) -> Optional[float]:
        successes = self.successes
        if not successes:
            return None
        return float(np.mean([record.conf_after for record in successes]))

    def rate_above(self, threshold: float) -> Optional[float]:
        """Attack rate over successes whose new confidence exceeds ``threshold``"""
        if not self.records:
            return None
        return sum(record.conf_after > threshold for record in self.successes) / self.n


class ScatterRow(NamedTuple):
    conf_before: float
    conf_after: float
    count: int


def confidence_scatter(
    report: AttackReport, bin_width: float = 0.1
) -> List[ScatterRow]:
    """Successful attacks counted on a grid of confidence bins (lower bin edges)"""
    bins = max(1, math.ceil(round(1.0 / bin_width, 9)))
    counts: Dict[Tuple[int, int], int] = {}
    for record in report.successes:
        key = (
            min(int(record.conf_before / bin_width), bins - 1),
            min(int(record.conf_after / bin_width), bins - 1),
        )
        counts[key] = counts.get(key, 0) + 1
    return [
        ScatterRow(round(i * bin_width, 9), round(j * bin_width, 9), count)
        for (i, j), count in sorted(counts.items())
    ]


@dataclass
class BoundCheck:
    checked: int = 0
    violations: int = 0


@dataclass
class CampaignResult:
    reports: Dict[HeadKind, AttackReport]
    scatter: Dict[HeadKind, List[ScatterRow]]
    bound_checks: Dict[HeadKind, BoundCheck]


def check_bound(
    classifier: Classifier,
    x: Vector,
    attacked: Vector,
    lipschitz: float,
    centroids: CentroidSystem,
) -> Optional[bool]:
    """Whether ``||x~ - x||`` respects the distortion bound, ``None`` when undefined"""
    try:
        bound = min_distortion_bound(
            classifier.model, x, attacked, centroids, lipschitz
        )
    except SameClassError:
        return None
    distortion = euclidean_norm(attacked - x)
    return distortion + 1e-12 * (1.0 + abs(bound.lower_bound)) >= bound.lower_bound


def attack_campaign(
    classifiers: Sequence[Classifier],
    data: LabeledDataset,
    config: CampaignConfig,
    seed: Optional[int] = None,
) -> CampaignResult:
    """One-pixel attacks on a seeded sample, for every head.

    Every success is checked against the distortion lower bound of its head's
    centroid geometry. Non-image data is treated as a one-row image. ``seed``
    overrides ``config.seed``.
    """
    seed = config.seed if seed is None else seed
    sample = data.sample(config.sample_size, seed)
    geometry = data.geometry or ImageGeometry(1, data.dim, 1)
    lo, hi = value_range(data)
    budget = PixelBudget(geometry, lo, hi, config.values)
    result = CampaignResult({}, {}, {})
    for classifier in classifiers:
        report = AttackReport(classifier.kind)
        check = BoundCheck()
        lipschitz = lipschitz_upper_bound(classifier.model, penultimate=True)
        centroids = classifier.centroids()
        classes, confidence = ((), ())
        if sample.size:
            classes, confidence = classifier.predict_with_confidence(sample.features)
        for index in range(sample.size):
            x = sample.features[:, index]
            candidate = one_pixel_attack(
                classifier,
                x,
                budget,
                config.strategy,
                config.population,
                config.iterations,
                seed + index,
            )
            record = AttackRecord(
                sample_id=index,
                head=classifier.kind,
                true_class=int(sample.labels.assignments[index]),
                pred_class=int(classes[index]),
                attacked_class=(
                    candidate.attacked_class if candidate else int(classes[index])
                ),
                success=candidate is not None,
                distortion_l2=euclidean_norm(candidate.image - x) if candidate else 0.0,
                conf_before=float(confidence[index]),
                conf_after=(
                    candidate.confidence if candidate else float(confidence[index])
                ),
            )
            report.records.append(record)
            if candidate is not None:
                holds = check_bound(
                    classifier, x, candidate.image, lipschitz, centroids
                )
                if holds is not None:
                    check.checked += 1
                    check.violations += not holds
        result.reports[classifier.kind] = report
        result.scatter[classifier.kind] = confidence_scatter(report, config.bin_width)
        result.bound_checks[classifier.kind] = check
        logger.info(
            "%s one-pixel: %d of %d attacked, %d bound violations",
            classifier.kind.value,
            len(report.successes),
            report.n,
            check.violations,
        )
    return result


class RunSummary(NamedTuple):
    mean: Optional[float]
    std: Optional[float]
    runs: int


def summarize_runs(values: Sequence[Optional[float]]) -> RunSummary:
    """Mean and sample standard deviation over the runs where ``value`` is defined"""
    defined = [value for value in values if value is not None]
    if not defined:
        return RunSummary(None, None, 0)
    std = float(np.std(defined, ddof=1)) if len(defined) > 1 else 0.0
    return RunSummary(float(np.mean(defined)), std, len(defined))


def repeated_campaign(
    classifiers: Sequence[Classifier],
    data: LabeledDataset,
    config: CampaignConfig,
) -> List[CampaignResult]:
    """``config.runs`` campaigns seeded ``config.seed``, ``config.seed + 1``, ..."""
    return [
        attack_campaign(classifiers, data, config, config.seed + run)
        for run in range(config.runs)
    ]
