import os

import numpy as np
import pytest

from gaussnet.attacks import (
    GaussClassifier,
    SoftmaxClassifier,
    attack_campaign,
    evaluate,
    fgsm_sweep,
    value_range,
)
from gaussnet.config import (
    FGSM_GRID,
    CampaignConfig,
    HeadKind,
    TailorConfig,
    TrainConfig,
)
from gaussnet.data import load_mnist
from gaussnet.geometry import verify_equivalence
from gaussnet.network import forward_penultimate
from gaussnet.tailoring import rank_samples, tailor_network
from gaussnet.training import accuracy, init_model, train

MNIST_DIR = os.environ.get("GAUSSNET_MNIST_DIR")

pytestmark = [
    pytest.mark.slow,
    pytest.mark.skipif(not MNIST_DIR, reason="GAUSSNET_MNIST_DIR not set"),
]


@pytest.fixture(scope="module")
def mnist():
    return load_mnist(MNIST_DIR)


@pytest.fixture(scope="module")
def networks(mnist):
    train_set, _ = mnist
    config = TrainConfig({"epochs": 10, "learning_rate": 0.05, "batch_size": 64})
    model = train(init_model([784, 128, 10], seed=0), train_set, config)
    tailored = tailor_network(
        model, train_set, TailorConfig({"epochs": 3, "learning_rate": 0.001})
    )
    return SoftmaxClassifier(model), GaussClassifier(tailored.model, tailored.head)


def test_softmax_accuracy_and_equivalence(mnist, networks):
    _, test_set = mnist
    softmax, _ = networks
    assert accuracy(softmax.model, test_set) >= 0.95
    assert verify_equivalence(softmax.model, test_set.features).passed


def test_gauss_accuracy_close_to_softmax(mnist, networks):
    _, test_set = mnist
    softmax, gauss = networks
    baseline = evaluate(softmax, test_set).accuracy
    assert evaluate(gauss, test_set).accuracy >= baseline - 0.01


def test_gauss_head_is_harder_to_attack(mnist, networks):
    _, test_set = mnist
    config = CampaignConfig({"sample_size": 200})
    result = attack_campaign(list(networks), test_set, config)
    softmax_rate = result.reports[HeadKind.SOFTMAX].attack_rate
    gauss_rate = result.reports[HeadKind.GAUSS].attack_rate
    assert gauss_rate < softmax_rate
    assert all(check.violations == 0 for check in result.bound_checks.values())


def test_fgsm_sweep(mnist, networks):
    _, test_set = mnist
    softmax, gauss = networks
    bounds = value_range(test_set)
    clean = evaluate(softmax, test_set).accuracy
    softmax_rows = fgsm_sweep(softmax, test_set, FGSM_GRID, bounds)
    gauss_rows = fgsm_sweep(gauss, test_set, FGSM_GRID, bounds)
    assert softmax_rows[0].accuracy == clean
    for soft, gauss_row in zip(softmax_rows, gauss_rows):
        if soft.epsilon >= 0.2:
            assert gauss_row.accuracy >= soft.accuracy


def test_outliers_have_vanishing_confidence(mnist, networks):
    _, test_set = mnist
    _, gauss = networks
    fp = forward_penultimate(gauss.model, test_set.features)
    ranking = rank_samples(gauss.head, fp, 10)
    assert ranking.prototypes[-1].confidence >= ranking.outliers[0].confidence
    assert all(sample.confidence < 1e-10 for sample in ranking.outliers)
    assert np.all([sample.outlier for sample in ranking.outliers])
