from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

DenseMatrix = NDArray[np.float64]
Vector = NDArray[np.float64]
Shape = Tuple[int, ...]


class GaussNetError(Exception):
    """Base error of the package"""


class DimensionMismatchError(GaussNetError, ValueError):
    """Operand shapes do not fit together"""

    def __init__(self, left: Shape, right: Shape, what: str = "operands") -> None:
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(
            f"{what} have incompatible shapes {self.left} and {self.right}"
        )


class ConvergenceError(GaussNetError):
    """Iteration stopped before reaching the requested tolerance"""

    def __init__(self, iterate: np.ndarray, gap: float, iterations: int) -> None:
        self.iterate = iterate
        self.gap = gap
        super().__init__(
            f"no convergence after {iterations} iterations, relative gap {gap:.3e}"
        )


class ResidualError(GaussNetError):
    """Linear system has no exact solution"""

    def __init__(self, residual: float, tolerance: float) -> None:
        self.residual = residual
        super().__init__(f"residual {residual:.3e} exceeds tolerance {tolerance:.3e}")


class EmptyClassError(GaussNetError):
    """A class has no members"""

    def __init__(self, class_index: int) -> None:
        self.class_index = class_index
        super().__init__(f"class {class_index} has no members")


class NonFiniteLossError(GaussNetError):
    """Loss became NaN or infinite during optimization"""

    def __init__(self, epoch: int, batch: int, loss: float) -> None:
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")


class NonFiniteGradientError(GaussNetError):
    """Input gradient contains NaN or infinite entries"""


class SameClassError(GaussNetError):
    """Distortion bound requested for a pair predicted in one class"""


class PrototypeError(GaussNetError):
    """Point is not mapped onto its centroid"""

    def __init__(self, gap: float, tolerance: float) -> None:
        self.gap = gap
        super().__init__(f"prototype gap {gap:.3e} exceeds tolerance {tolerance:.3e}")


class BoundViolationError(GaussNetError):
    """A computed upper bound is smaller than the quantity it bounds"""

    def __init__(self, bound: float, gap: float) -> None:
        self.bound = bound
        self.gap = gap
        super().__init__(f"gap {gap:.6e} exceeds bound {bound:.6e}")


class GeometryError(GaussNetError, ValueError):
    """Image geometry does not match the model input"""


class DegenerateSplitError(GaussNetError, ValueError):
    """Split leaves one side empty"""


class FormatError(GaussNetError):
    """Malformed binary file"""


class BadMagicError(FormatError):
    """Unexpected magic number"""


class TruncatedFileError(FormatError):
    """File ends before its declared payload"""

    def __init__(self, expected: int, actual: int, path: str = "") -> None:
        self.expected = expected
        self.actual = actual
        where = f"{path}: " if path else ""
        super().__init__(f"{where}expected {expected} bytes, got {actual}")


class CountMismatchError(FormatError):
    """Image and label files disagree on the number of items"""


class UnsupportedVersionError(FormatError):
    """Container written by an unknown format version"""


def as_matrix(value: ArrayLike, name: str = "matrix") -> DenseMatrix:
    """Column-major float64 2-D array with finite entries"""
    array = np.asfortranarray(value, dtype=np.float64)
    if array.ndim != 2:
        raise DimensionMismatchError(array.shape, (-1, -1), name)
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} has non-finite entries")
    return array


def as_vector(value: ArrayLike, name: str = "vector") -> Vector:
    array = np.asarray(value, dtype=np.float64)
    if array.ndim != 1:
        raise DimensionMismatchError(array.shape, (-1,), name)
    return array


@dataclass(frozen=True)
class PartitionMatrix:
    """Hard assignment of m rows to c classes.

    Equivalent to a binary matrix ``Y`` with exactly one one per row; only the
    column index of that one is stored.
    """

    assignments: np.ndarray
    classes: int

    def __post_init__(self) -> None:
        labels = np.asarray(self.assignments, dtype=np.int64)
        if labels.ndim != 1:
            raise DimensionMismatchError(labels.shape, (-1,), "assignments")
        if self.classes < 1:
            raise ValueError(f"class count must be positive, got {self.classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.classes):
            raise ValueError(f"labels must lie in [0, {self.classes})")
        labels.setflags(write=False)
        object.__setattr__(self, "assignments", labels)

    @classmethod
    def from_labels(
        cls, labels: Sequence[int], classes: Optional[int] = None
    ) -> "PartitionMatrix":
        array = np.asarray(labels, dtype=np.int64)
        if classes is None:
            classes = int(array.max()) + 1 if array.size else 1
        return cls(array, classes)

    @classmethod
    def from_dense(cls, y: ArrayLike) -> "PartitionMatrix":
        dense = np.asarray(y)
        if dense.ndim != 2:
            raise DimensionMismatchError(dense.shape, (-1, -1), "partition matrix")
        binary = np.all((dense == 0) | (dense == 1))
        if not binary or not np.all(dense.sum(axis=1) == 1):
            raise ValueError("every row must contain exactly one one")
        return cls(dense.argmax(axis=1), dense.shape[1])

    def dense(self) -> DenseMatrix:
        y = np.zeros((len(self), self.classes), dtype=np.float64, order="F")
        y[np.arange(len(self)), self.assignments] = 1.0
        return y

    def counts(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.classes)

    def take(self, indices: ArrayLike) -> "PartitionMatrix":
        return PartitionMatrix(self.assignments[np.asarray(indices)], self.classes)

    def __len__(self) -> int:
        return int(self.assignments.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PartitionMatrix):
            return NotImplemented
        return self.classes == other.classes and np.array_equal(
            self.assignments, other.assignments
        )

    def __hash__(self) -> int:
        return hash((self.classes, self.assignments.tobytes()))
