import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from config import RunConfig
from datasets.clouds import gen_synthetic_clouds
from datasets.splits import Split, make_split
from samgc import autodiff as ad
from samgc.autodiff import Adam, Tape
from samgc.errors import ContractError
from samgc.layer import VARIANTS
from samgc.models import NodeClassifier, PointCloudClassifier
from tests.conftest import requires_cora, two_cluster_dataset
from training import (
    NodeTask,
    cloud_step,
    evaluate,
    fit_cloud,
    fit_node,
    run_ablation,
    snapshot,
    train_epoch,
)

EMPTY = np.zeros(0, dtype=np.int64)


def node_model(dataset, variant="samgc", seed=0):
    return NodeClassifier.create(
        dataset.num_features,
        dataset.num_classes,
        hidden=8,
        variant=variant,
        r=4,
        d_nw=4,
        dropout=0.0,
        seed=seed,
    )


@pytest.fixture
def dataset():
    return two_cluster_dataset(per_class=15)


@pytest.fixture
def task(dataset):
    return NodeTask.build(dataset, make_split(dataset, "random", seed=1), 2)


class TestNodeTraining:
    def test_overfits_two_clusters(self, dataset):
        everything = np.arange(dataset.n)
        task = NodeTask.build(dataset, Split(everything, EMPTY, EMPTY), 2)
        model = node_model(dataset)
        optimizer = Adam(lr=0.01)
        rng = np.random.default_rng(0)
        for _ in range(200):
            train_epoch(model, task, optimizer, rng)
        assert evaluate(model, task, everything).oa == 1.0

    def test_zero_learning_rate_changes_nothing(self, task):
        model = node_model(task.dataset)
        before = snapshot(model)
        optimizer = Adam(lr=0.0)
        rng = np.random.default_rng(0)
        losses = [train_epoch(model, task, optimizer, rng).loss for _ in range(3)]
        assert losses[0] == losses[1] == losses[2]
        for name, values in snapshot(model).items():
            assert_array_equal(values, before[name])

    def test_evaluate_leaves_parameters_alone(self, task):
        model = node_model(task.dataset)
        before = snapshot(model)
        first = evaluate(model, task)
        second = evaluate(model, task)
        assert first == second
        for name, values in snapshot(model).items():
            assert_array_equal(values, before[name])

    def test_evaluate_rejects_empty_mask(self, task):
        with pytest.raises(ContractError):
            evaluate(node_model(task.dataset), task, [])

    def test_unknown_model_type(self, task):
        with pytest.raises(ContractError):
            train_epoch(object(), task, Adam(), np.random.default_rng(0))

    def test_fit_restores_best_parameters(self, task):
        model = node_model(task.dataset)
        result = fit_node(
            model, task, Adam(lr=0.05), epochs=30, patience=3, rng=np.random.default_rng(0)
        )
        assert evaluate(model, task, task.split.val).oa == result.best_val
        assert result.history[-1] == (result.best_epoch, "test", result.test)
        epochs_run = max(epoch for epoch, split, _ in result.history if split == "train")
        assert epochs_run <= 30
        assert epochs_run - result.best_epoch <= 3

    def test_fit_is_deterministic(self, task):
        results = [
            fit_node(
                node_model(task.dataset, "sagc"),
                task,
                Adam(lr=0.02),
                epochs=5,
                patience=10,
                rng=np.random.default_rng(3),
            )
            for _ in range(2)
        ]
        assert results[0].history == results[1].history


@pytest.mark.slow
def test_cloud_loss_is_sum_of_phase_losses():
    train_set = gen_synthetic_clouds(classes=("sphere", "plane"), per_class=2, n_pts=16, seed=0)
    test_set = gen_synthetic_clouds(classes=("sphere", "plane"), per_class=1, n_pts=16, seed=1)
    model = PointCloudClassifier.create(2, hidden=4, k_list=(3, 5), r=2, d_nw=2)
    seen = []

    def check(steps):
        for step in steps:
            assert len(step.phase_losses) == 2
            total = sum(loss.item() for loss in step.phase_losses)
            assert step.loss.item() == total
        seen.append(len(steps))

    result = fit_cloud(
        model,
        train_set,
        test_set,
        Adam(lr=0.005),
        epochs=10,
        rng=np.random.default_rng(0),
        batch_size=2,
        on_step=check,
    )
    assert seen == [2] * 20
    assert len(result.history) == 20
    assert all(np.isfinite(metrics.loss) for _, _, metrics in result.history)
    assert result.test == result.history[-1][2]


@pytest.mark.slow
def test_ablation_covers_every_variant():
    dataset = two_cluster_dataset(per_class=10)
    config = RunConfig().update(
        {
            "split": "random",
            "epochs": 3,
            "patience": 5,
            "hidden_dim": 4,
            "re_dim": 2,
            "nw_dim": 2,
            "dropout": 0.0,
        }
    )
    rows = run_ablation(dataset, config, seeds=2)
    assert [row.variant for row in rows] == list(VARIANTS)
    for row in rows:
        assert len(row.accuracies) == 2
        assert 0.0 <= row.mean <= 1.0 and row.std >= 0.0


@pytest.fixture(scope="module")
def cora_ablation(cora):
    return {row.variant: row for row in run_ablation(cora, RunConfig(), seeds=5)}


@pytest.mark.slow
@requires_cora
def test_cora_standard_split_accuracy(cora_ablation):
    assert cora_ablation["samgc"].mean >= 0.78


@pytest.mark.slow
@requires_cora
def test_cora_structure_beats_plain_aggregation(cora_ablation):
    assert list(cora_ablation) == list(VARIANTS)
    assert cora_ablation["samgc"].mean >= cora_ablation["graphsage"].mean


class GradientRecorder:
    def __init__(self):
        self.steps = []

    def step(self, params):
        self.steps.append([p.grad.copy() for p in params])


def test_cloud_batch_gradient_is_mean_of_cloud_gradients():
    clouds = gen_synthetic_clouds(classes=("sphere", "plane"), per_class=1, n_pts=16, seed=0)
    model = PointCloudClassifier.create(2, hidden=4, k_list=(3, 5), r=2, d_nw=2)
    with Tape():
        first, second = [
            cloud_step(model, clouds.clouds[i], clouds.labels[i]) for i in (0, 1)
        ]
        joint = ad.mul(ad.add(first.loss, second.loss), 0.5)
    ad.backward(joint)
    expected = [p.grad.copy() for p in model.parameters()]
    for p in model.parameters():
        p.grad.fill(0.0)

    recorder = GradientRecorder()
    train_epoch(model, clouds, recorder, np.random.default_rng(0), batch_size=2)
    assert len(recorder.steps) == 1
    for got, want in zip(recorder.steps[0], expected):
        assert_allclose(got, want, atol=1e-12)
