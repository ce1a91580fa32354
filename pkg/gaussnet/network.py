"""Feedforward networks ``F(x) = softmax(f_p(x)^T W)`` with exact gradients.

A model is a chain of weight matrices. The last matrix ``W`` maps the
penultimate space (dimension ``d``) onto ``c`` class scores with the identity
activation; scoring heads (softmax or Gauss) are applied outside the model.

An affine layer lifts its input by a constant-1 coordinate, so its bias is
the last row of its weight matrix and every layer stays a pure matrix
product. Points are columns throughout.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.special
from numpy.typing import ArrayLike

from gaussnet.base import (
    DenseMatrix,
    DimensionMismatchError,
    PartitionMatrix,
    as_matrix,
)
from gaussnet.numerics import spectral_norm


class Activation(Enum):
    IDENTITY = 0
    RELU = 1

    @property
    def lipschitz(self) -> float:
        return 1.0

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self is Activation.RELU:
            return np.maximum(z, 0.0)
        return z

    def derivative(self, z: np.ndarray) -> np.ndarray:
        if self is Activation.RELU:
            return (z > 0.0).astype(np.float64)
        return np.ones_like(z)


class LossKind(Enum):
    CROSS_ENTROPY = "cross_entropy"
    TAILORING = "tailoring"


@dataclass(frozen=True, eq=False)
class Layer:
    weight: DenseMatrix
    activation: Activation = Activation.IDENTITY
    affine: bool = False

    def __post_init__(self) -> None:
        weight = as_matrix(self.weight, "layer weight").copy(order="F")
        if self.affine and weight.shape[0] < 2:
            raise ValueError(
                "affine layer needs at least one input row besides the bias"
            )
        weight.setflags(write=False)
        object.__setattr__(self, "weight", weight)

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0] - int(self.affine)

    @property
    def fan_out(self) -> int:
        return self.weight.shape[1]

    @property
    def linear_part(self) -> DenseMatrix:
        return self.weight[:-1] if self.affine else self.weight

    def lift(self, inputs: DenseMatrix) -> DenseMatrix:
        if not self.affine:
            return inputs
        return np.vstack([inputs, np.ones((1, inputs.shape[1]))])

    def replace(self, weight: ArrayLike) -> "Layer":
        return Layer(np.asarray(weight), self.activation, self.affine)


@dataclass(frozen=True, eq=False)
class NetworkModel:
    layers: Tuple[Layer, ...]

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("a model needs at least one layer")
        for previous, current in zip(layers, layers[1:]):
            if previous.fan_out != current.fan_in:
                raise DimensionMismatchError(
                    previous.weight.shape, current.weight.shape, "consecutive layers"
                )
        if layers[-1].activation is not Activation.IDENTITY:
            raise ValueError("the final layer must use the identity activation")
        d, c = layers[-1].weight.shape
        if d < c - 1:
            raise ValueError(
                f"penultimate dimension {d} is smaller than c - 1 = {c - 1}"
            )
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def penultimate_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    @property
    def class_count(self) -> int:
        return self.layers[-1].fan_out

    @property
    def hidden(self) -> Tuple[Layer, ...]:
        return self.layers[:-1]

    @property
    def head_weight(self) -> DenseMatrix:
        return self.layers[-1].weight

    def with_weights(self, weights: Sequence[ArrayLike]) -> "NetworkModel":
        if len(weights) != len(self.layers):
            raise ValueError(
                f"expected {len(self.layers)} weight matrices, got {len(weights)}"
            )
        return NetworkModel(tuple(l.replace(w) for l, w in zip(self.layers, weights)))


@dataclass
class GradientTape:
    """Per-layer (lifted) inputs and pre-activations of one forward pass"""

    inputs: List[DenseMatrix] = field(default_factory=list)
    pre_activations: List[DenseMatrix] = field(default_factory=list)

    @property
    def penultimate(self) -> DenseMatrix:
        return self.inputs[-1]

    @property
    def logits(self) -> DenseMatrix:
        return self.pre_activations[-1]


class Gradients(NamedTuple):
    loss: float
    weights: List[DenseMatrix]
    inputs: DenseMatrix


def _columns(model: NetworkModel, x: ArrayLike) -> Tuple[DenseMatrix, bool]:
    array = np.asarray(x, dtype=np.float64)
    single = array.ndim == 1
    batch = array.reshape(-1, 1) if single else array
    if batch.ndim != 2 or batch.shape[0] != model.input_dim:
        raise DimensionMismatchError(array.shape, (model.input_dim,), "input")
    return batch, single


def _targeted_columns(
    model: NetworkModel, batch: ArrayLike, targets: PartitionMatrix
) -> DenseMatrix:
    inputs, _ = _columns(model, batch)
    if len(targets) != inputs.shape[1]:
        raise DimensionMismatchError((len(targets),), inputs.shape, "targets and batch")
    if targets.classes != model.class_count:
        raise DimensionMismatchError(
            (targets.classes,), (model.class_count,), "target classes and model"
        )
    return inputs


def record(model: NetworkModel, batch: ArrayLike) -> GradientTape:
    activations, _ = _columns(model, batch)
    tape = GradientTape()
    for layer in model.layers:
        lifted = layer.lift(activations)
        z = layer.weight.T @ lifted
        tape.inputs.append(lifted)
        tape.pre_activations.append(z)
        activations = layer.activation.apply(z)
    return tape


def forward_penultimate(model: NetworkModel, x: ArrayLike) -> np.ndarray:
    """``f_p(x)``: the (lifted) input of the final weight matrix"""
    batch, single = _columns(model, x)
    activations = batch
    for layer in model.hidden:
        activations = layer.activation.apply(layer.weight.T @ layer.lift(activations))
    fp = model.layers[-1].lift(activations)
    return fp[:, 0] if single else fp


def logits(model: NetworkModel, x: ArrayLike) -> np.ndarray:
    """``f_p(x)^T W``"""
    fp = forward_penultimate(model, x)
    return model.head_weight.T @ fp


def softmax(z: ArrayLike) -> np.ndarray:
    """Column-wise softmax with max subtraction"""
    return scipy.special.softmax(np.asarray(z, dtype=np.float64), axis=0)


def predict(model: NetworkModel, x: ArrayLike) -> np.ndarray:
    return np.argmax(logits(model, x), axis=0)


def _loss_seed(
    tape: GradientTape,
    model: NetworkModel,
    targets: PartitionMatrix,
    loss: LossKind,
    centroids: Optional[ArrayLike],
) -> Tuple[float, DenseMatrix, DenseMatrix]:
    """Loss value, head gradient and gradient w.r.t. the lifted ``f_p``"""
    y = targets.dense().T
    if loss is LossKind.CROSS_ENTROPY:
        log_p = scipy.special.log_softmax(tape.logits, axis=0)
        delta = np.exp(log_p) - y
        head_gradient = tape.penultimate @ delta.T
        return -float(np.sum(log_p * y)), head_gradient, model.head_weight @ delta
    if loss is LossKind.TAILORING:
        if centroids is None:
            raise ValueError("tailoring loss needs centroids")
        c = as_matrix(centroids, "centroids")
        if c.shape != model.head_weight.shape:
            raise DimensionMismatchError(c.shape, model.head_weight.shape, "centroids")
        residual = tape.penultimate - c @ y
        head_gradient = np.zeros_like(model.head_weight)
        return float(np.sum(residual * residual)), head_gradient, 2.0 * residual
    raise ValueError(f"unknown loss kind {loss!r}")


def backward(
    model: NetworkModel,
    batch: ArrayLike,
    targets: PartitionMatrix,
    loss: LossKind,
    centroids: Optional[ArrayLike] = None,
) -> Gradients:
    """Reverse-mode gradients of the batch loss (summed over columns).

    Cross-entropy is taken over the softmax of the logits. The tailoring
    loss ``||f_p(X)^T - Y C^T||^2`` does not involve the final layer, whose
    gradient is therefore zero.
    """
    inputs = _targeted_columns(model, batch, targets)
    tape = record(model, inputs)
    value, head_gradient, upstream = _loss_seed(tape, model, targets, loss, centroids)
    weights: List[DenseMatrix] = [head_gradient]
    for index in reversed(range(len(model.hidden))):
        layer = model.layers[index]
        if model.layers[index + 1].affine:
            upstream = upstream[:-1]
        delta = upstream * layer.activation.derivative(tape.pre_activations[index])
        weights.append(tape.inputs[index] @ delta.T)
        upstream = layer.weight @ delta
    if model.layers[0].affine:
        upstream = upstream[:-1]
    weights.reverse()
    return Gradients(value, weights, upstream)


def loss_value(
    model: NetworkModel,
    batch: ArrayLike,
    targets: PartitionMatrix,
    loss: LossKind,
    centroids: Optional[ArrayLike] = None,
) -> float:
    inputs = _targeted_columns(model, batch, targets)
    tape = record(model, inputs)
    value, _, _ = _loss_seed(tape, model, targets, loss, centroids)
    return value


def lipschitz_upper_bound(
    model: NetworkModel,
    penultimate: bool = False,
    tol: float = 1e-12,
    max_iter: int = 10_000,
) -> float:
    """Product of the layers' operator norms.

    An upper bound on the Lipschitz modulus of the logit map (or of ``f_p``
    alone when ``penultimate`` is set), never the exact modulus, whose
    computation is NP-hard. Bias rows do not enter the bound.
    """
    layers = model.hidden if penultimate else model.layers
    bound = 1.0
    for layer in layers:
        norm = spectral_norm(layer.linear_part, tol, max_iter)
        bound *= norm * layer.activation.lipschitz
    return bound
