import numpy as np
import pytest
import scipy.special

from gaussnet.attacks import (
    AttackRecord,
    AttackReport,
    GaussClassifier,
    PixelBudget,
    SoftmaxClassifier,
    attack_campaign,
    confidence_scatter,
    evaluate,
    fgsm_attack,
    fgsm_perturb,
    fgsm_sweep,
    one_pixel_attack,
    repeated_campaign,
    summarize_runs,
    value_range,
)
from gaussnet.base import GeometryError, PartitionMatrix
from gaussnet.config import (
    CampaignConfig,
    HeadKind,
    SearchStrategy,
    TailorConfig,
    TrainConfig,
)
from gaussnet.data import ImageGeometry, LabeledDataset, synth_blobs
from gaussnet.geometry import CentroidSystem, Provenance
from gaussnet.network import Layer, NetworkModel
from gaussnet.tailoring import GaussHead, tailor_network
from gaussnet.training import init_model, train


@pytest.fixture
def identity_softmax():
    return SoftmaxClassifier(NetworkModel((Layer(np.eye(2)),)))


@pytest.fixture
def identity_gauss():
    head = GaussHead(CentroidSystem(np.eye(2), Provenance.KMEANS_OPTIMAL))
    return GaussClassifier(NetworkModel((Layer(np.eye(2)),)), head)


def test_softmax_scores_are_log_probabilities(identity_softmax):
    scores = identity_softmax.log_scores(np.array([0.3, 0.9]))
    np.testing.assert_allclose(scores[:, 0], scipy.special.log_softmax([0.3, 0.9]))


def test_gauss_scores_are_negative_squared_distances(identity_gauss):
    scores = identity_gauss.log_scores(np.array([1.0, 0.0]))
    np.testing.assert_allclose(scores[:, 0], [0.0, -2.0])
    assert identity_gauss.outlier_threshold == 0.5


def test_evaluate(identity_softmax):
    features = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 0.0]])
    data = LabeledDataset(features, PartitionMatrix([0, 1, 1], 2))
    summary = evaluate(identity_softmax, data)
    assert summary.accuracy == pytest.approx(2 / 3)
    assert summary.n == 3
    assert summary.outlier_fraction == 0.0


def test_value_range_of_plain_features():
    data = LabeledDataset(np.array([[-2.0, 3.0]]), PartitionMatrix([0, 1], 2))
    assert value_range(data) == (-2.0, 3.0)


def test_fgsm_softmax_follows_gradient_sign(identity_softmax):
    attacked = fgsm_attack(identity_softmax, np.array([0.5, 0.5]), 0, 0.1)
    np.testing.assert_allclose(attacked, [0.4, 0.6])


def test_fgsm_gauss_moves_away_from_centroid(identity_gauss):
    attacked = fgsm_attack(identity_gauss, np.array([0.8, 0.1]), 0, 0.1)
    np.testing.assert_allclose(attacked, [0.7, 0.2])


def test_fgsm_linear_model_gradient_sign():
    rng = np.random.default_rng(0)
    w = rng.standard_normal((4, 3))
    classifier = SoftmaxClassifier(NetworkModel((Layer(w),)))
    x = rng.standard_normal(4)
    p = scipy.special.softmax(w.T @ x)
    expected = x + 0.05 * np.sign(w @ (p - np.eye(3)[2]))
    np.testing.assert_allclose(fgsm_attack(classifier, x, 2, 0.05), expected)


def test_fgsm_zero_step_is_identity(identity_softmax):
    x = np.random.default_rng(1).uniform(0, 1, (2, 10))
    labels = PartitionMatrix(np.zeros(10, dtype=int), 2)
    perturbed = fgsm_perturb(identity_softmax, x, labels, 0.0, (0.0, 1.0))
    np.testing.assert_array_equal(perturbed, x)


@pytest.mark.parametrize("epsilon", [0.01, 0.1, 0.5])
def test_fgsm_respects_budget_and_range(epsilon):
    rng = np.random.default_rng(2)
    classifier = SoftmaxClassifier(init_model([6, 5, 3], seed=2))
    x = rng.uniform(0, 1, (6, 20))
    labels = PartitionMatrix(rng.integers(0, 3, 20), 3)
    attacked = fgsm_perturb(classifier, x, labels, epsilon, (0.0, 1.0))
    assert np.max(np.abs(attacked - x)) <= epsilon + 1e-15
    assert attacked.min() >= 0.0 and attacked.max() <= 1.0


def test_fgsm_rejects_negative_step(identity_softmax):
    with pytest.raises(ValueError):
        fgsm_attack(identity_softmax, np.zeros(2), 0, -0.1)


@pytest.fixture(scope="module")
def blobs():
    return synth_blobs(3, 40, 2, 6.0, seed=0)


@pytest.fixture(scope="module")
def trained(blobs):
    config = TrainConfig({"epochs": 10, "learning_rate": 0.01, "batch_size": 16})
    model = train(init_model([2, 8, 3], seed=0), blobs, config)
    tailor_config = TailorConfig({"epochs": 2, "learning_rate": 0.01})
    tailored = tailor_network(model, blobs, tailor_config)
    return model, tailored


def test_sweep_without_step_is_clean_accuracy(trained, blobs):
    model, _ = trained
    classifier = SoftmaxClassifier(model)
    rows = fgsm_sweep(classifier, blobs, [0.0, 0.5, 2.0])
    assert rows[0].accuracy == pytest.approx(evaluate(classifier, blobs).accuracy)
    assert rows[0].successes == 0
    assert rows[0].mean_confidence == 0.0
    assert rows[-1].accuracy <= rows[0].accuracy


def test_sweep_needs_sorted_steps(identity_softmax, blobs):
    with pytest.raises(ValueError):
        fgsm_sweep(identity_softmax, blobs, [0.1, 0.0])


def test_pixel_budget_apply():
    budget = PixelBudget(ImageGeometry(1, 2, 2), 0.0, 1.0, 3)
    x = np.array([0.1, 0.2, 0.3, 0.4])
    candidates = budget.apply(x, np.array([1, 0]), np.array([[0, 2], [1, 1]]))
    np.testing.assert_allclose(candidates[:, 0], [0.1, 0.2, 0.0, 1.0])
    np.testing.assert_allclose(candidates[:, 1], [0.5, 0.5, 0.3, 0.4])


def test_pixel_budget_checks_range():
    with pytest.raises(ValueError):
        PixelBudget(ImageGeometry(1, 2), 1.0, 1.0)


def test_one_pixel_on_constant_model_fails():
    classifier = SoftmaxClassifier(NetworkModel((Layer(np.zeros((4, 2))),)))
    budget = PixelBudget(ImageGeometry(2, 2), values=5)
    assert one_pixel_attack(classifier, np.full(4, 0.5), budget) is None


def test_one_pixel_picks_most_harmful(identity_softmax):
    budget = PixelBudget(ImageGeometry(1, 2), values=5)
    x = np.array([0.7, 0.4])
    candidate = one_pixel_attack(identity_softmax, x, budget)
    assert candidate.position == 0
    assert candidate.values == (0.0,)
    assert candidate.attacked_class == 1
    assert candidate.confidence == pytest.approx(scipy.special.expit(0.4))
    np.testing.assert_allclose(candidate.image, [0.0, 0.4])
    assert np.count_nonzero(candidate.image != x) == 1


def test_one_pixel_geometry_mismatch(identity_softmax):
    with pytest.raises(GeometryError):
        one_pixel_attack(
            identity_softmax, np.zeros(2), PixelBudget(ImageGeometry(2, 2))
        )


@pytest.mark.parametrize("seed", range(5))
def test_evolution_never_beats_exhaustive(seed):
    rng = np.random.default_rng(seed)
    classifier = SoftmaxClassifier(init_model([9, 6, 3], seed=seed))
    budget = PixelBudget(ImageGeometry(3, 3), values=4)
    x = rng.uniform(0, 1, 9)
    exhaustive = one_pixel_attack(classifier, x, budget)
    evolved = one_pixel_attack(
        classifier,
        x,
        budget,
        SearchStrategy.EVOLUTION,
        population=12,
        iterations=5,
        seed=seed,
    )
    if evolved is not None:
        assert exhaustive is not None
        assert evolved.confidence <= exhaustive.confidence + 1e-12
        assert np.count_nonzero(evolved.image != x) <= 1


def test_evolution_is_seeded():
    classifier = SoftmaxClassifier(init_model([9, 6, 3], seed=1))
    budget = PixelBudget(ImageGeometry(3, 3), values=4)
    x = np.random.default_rng(1).uniform(0, 1, 9)
    runs = [
        one_pixel_attack(classifier, x, budget, SearchStrategy.EVOLUTION, 12, 5, seed=3)
        for _ in range(2)
    ]
    first, second = [
        None if run is None else (run.position, run.values) for run in runs
    ]
    assert first == second


def record(success, before, after, sample_id=0):
    return AttackRecord(
        sample_id, HeadKind.SOFTMAX, 0, 0, int(success), success, 0.1, before, after
    )


def test_empty_report():
    report = AttackReport(HeadKind.GAUSS)
    assert report.attack_rate is None
    assert report.mean_success_confidence is None
    assert report.rate_above(0.5) is None
    assert confidence_scatter(report) == []


def test_report_rates():
    report = AttackReport(
        HeadKind.SOFTMAX,
        [
            record(True, 0.9, 0.8),
            record(True, 0.9, 0.3),
            record(False, 0.7, 0.7),
            record(False, 0.5, 0.5),
        ],
    )
    assert report.attack_rate == 0.5
    assert report.mean_success_confidence == pytest.approx(0.55)
    assert report.rate_above(0.5) == 0.25


def test_scatter_bins():
    report = AttackReport(
        HeadKind.SOFTMAX,
        [
            record(True, 1.0, 0.55),
            record(True, 0.95, 0.51),
            record(True, 0.12, 0.0),
            record(False, 0.3, 0.3),
        ],
    )
    rows = confidence_scatter(report, 0.1)
    assert [tuple(row) for row in rows] == [(0.1, 0.0, 1), (0.9, 0.5, 2)]
    assert sum(row.count for row in rows) == len(report.successes)


@pytest.fixture(scope="module")
def campaign(trained, blobs):
    model, tailored = trained
    classifiers = [
        SoftmaxClassifier(model),
        GaussClassifier(tailored.model, tailored.head),
    ]
    config = CampaignConfig({"sample_size": 15, "values": 8, "seed": 4})
    return classifiers, config, attack_campaign(classifiers, blobs, config)


def test_campaign_respects_distortion_bound(campaign):
    _, _, result = campaign
    for kind in (HeadKind.SOFTMAX, HeadKind.GAUSS):
        assert result.reports[kind].n == 15
        assert result.bound_checks[kind].violations == 0
        assert result.bound_checks[kind].checked <= len(result.reports[kind].successes)


def test_campaign_scatter_counts_successes(campaign):
    _, _, result = campaign
    for kind, report in result.reports.items():
        assert sum(row.count for row in result.scatter[kind]) == len(report.successes)


def test_campaign_failed_records(campaign):
    _, _, result = campaign
    for report in result.reports.values():
        for item in report.records:
            if not item.success:
                assert item.attacked_class == item.pred_class
                assert item.distortion_l2 == 0.0
                assert item.conf_after == item.conf_before
            else:
                assert item.attacked_class != item.pred_class
                assert item.distortion_l2 > 0.0


def test_campaign_is_deterministic(campaign, blobs):
    classifiers, config, result = campaign
    again = attack_campaign(classifiers, blobs, config)
    for kind in result.reports:
        assert again.reports[kind].records == result.reports[kind].records


def test_campaign_on_empty_sample(campaign):
    classifiers, config, _ = campaign
    empty = LabeledDataset(np.zeros((2, 0)), PartitionMatrix([], 3))
    result = attack_campaign(classifiers, empty, config)
    for kind in (HeadKind.SOFTMAX, HeadKind.GAUSS):
        assert result.reports[kind].n == 0
        assert result.reports[kind].attack_rate is None
        assert result.scatter[kind] == []
        assert result.bound_checks[kind].checked == 0


def test_summarize_runs():
    summary = summarize_runs([0.5, None, 0.7])
    assert summary.mean == pytest.approx(0.6)
    assert summary.std == pytest.approx(np.sqrt(0.02))
    assert summary.runs == 2
    assert summarize_runs([0.25]) == (0.25, 0.0, 1)
    assert summarize_runs([None]) == (None, None, 0)


def test_repeated_campaign_seeds_each_run(campaign, blobs):
    classifiers, _, result = campaign
    config = CampaignConfig({"sample_size": 15, "values": 8, "seed": 4, "runs": 3})
    runs = repeated_campaign(classifiers, blobs, config)
    assert len(runs) == 3
    gauss = HeadKind.GAUSS
    assert runs[0].reports[gauss].records == result.reports[gauss].records
    shifted = attack_campaign(classifiers, blobs, config, seed=6)
    softmax = HeadKind.SOFTMAX
    assert runs[2].reports[softmax].records == shifted.reports[softmax].records
    for run in runs:
        assert all(check.violations == 0 for check in run.bound_checks.values())
