import logging
import math
from typing import List, Sequence

import numpy as np

from gaussnet.base import NonFiniteLossError, PartitionMatrix
from gaussnet.config import TrainConfig
from gaussnet.data import LabeledDataset
from gaussnet.network import (
    Activation,
    Layer,
    LossKind,
    NetworkModel,
    backward,
    predict,
)

logger = logging.getLogger(__name__)


def init_model(widths: Sequence[int], seed: int, affine: bool = True) -> NetworkModel:
    """ReLU MLP with layer widths ``n, h_1, ..., c``.

    Weights are drawn uniformly from ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``
    where ``fan_in`` counts the bias row of affine layers.
    """
    if len(widths) < 2:
        raise ValueError("need at least input and output widths")
    if any(width < 1 for width in widths):
        raise ValueError(f"widths must be positive, got {list(widths)}")
    rng = np.random.default_rng(seed)
    layers = []
    last = len(widths) - 2
    for index, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        rows = fan_in + int(affine)
        limit = 1.0 / math.sqrt(rows)
        weight = rng.uniform(-limit, limit, size=(rows, fan_out))
        activation = Activation.IDENTITY if index == last else Activation.RELU
        layers.append(Layer(weight, activation, affine))
    return NetworkModel(tuple(layers))


def accuracy(model: NetworkModel, data: LabeledDataset) -> float:
    if data.size == 0:
        return float("nan")
    return float(np.mean(predict(model, data.features) == data.labels.assignments))


def minibatches(
    size: int, batch_size: int, rng: np.random.Generator
) -> List[np.ndarray]:
    order = rng.permutation(size)
    return [order[start : start + batch_size] for start in range(0, size, batch_size)]


def train(
    model: NetworkModel, data: LabeledDataset, config: TrainConfig
) -> NetworkModel:
    """Mini-batch SGD with momentum on the mean cross-entropy.

    Reproducible: shuffling draws from a generator seeded by ``config.seed``.
    """
    rng = np.random.default_rng(config.seed)
    weights = [np.array(layer.weight) for layer in model.layers]
    velocity = [np.zeros_like(w) for w in weights]
    current = model
    for epoch in range(config.epochs):
        total = 0.0
        batches = minibatches(data.size, config.batch_size, rng)
        for batch_index, batch in enumerate(batches):
            targets = PartitionMatrix(data.labels.assignments[batch], data.classes)
            gradients = backward(
                current, data.features[:, batch], targets, LossKind.CROSS_ENTROPY
            )
            if not math.isfinite(gradients.loss):
                raise NonFiniteLossError(epoch, batch_index, gradients.loss)
            total += gradients.loss
            scale = config.learning_rate / len(batch)
            for w, v, g in zip(weights, velocity, gradients.weights):
                v *= config.momentum
                v -= scale * g
                w += v
            current = model.with_weights(weights)
        logger.info("epoch %d: mean cross-entropy %.6f", epoch + 1, total / data.size)
    return current
