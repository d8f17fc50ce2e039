"""Training, evaluation and the four-variant ablation.

``train_epoch`` and ``evaluate`` dispatch on the model type: node classifiers take a
``NodeTask``, point-cloud classifiers take a ``SyntheticCloudSet``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import singledispatch
from typing import Callable, Sequence

import numpy as np

from config import RunConfig
from datasets.clouds import SyntheticCloudSet
from datasets.cora import CitationDataset
from datasets.splits import Split, make_split
from samgc import autodiff as ad
from samgc.autodiff import Adam, Tape, Tensor
from samgc.errors import ContractError
from samgc.graph import HopSets, exact_hop_sets
from samgc.layer import VARIANTS
from samgc.models import (
    Metrics,
    NodeClassifier,
    PointCloudClassifier,
    cloud_forward,
    compute_metrics,
    hierarchical_combine,
    node_forward,
)

logger = logging.getLogger(__name__)


@dataclass
class NodeTask:
    dataset: CitationDataset
    split: Split
    hopsets: HopSets

    @classmethod
    def build(cls, dataset: CitationDataset, split: Split, hops: int) -> "NodeTask":
        return cls(dataset, split, exact_hop_sets(dataset.graph, max(hops, 1)))

    @property
    def features(self) -> Tensor:
        return self.dataset.features

    @property
    def labels(self) -> np.ndarray:
        return self.dataset.labels

    @property
    def num_classes(self) -> int:
        return self.dataset.num_classes


@dataclass
class CloudStep:
    prediction: int
    loss: Tensor
    phase_losses: list[Tensor]


@dataclass
class FitResult:
    history: list[tuple[int, str, Metrics]] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("nan")
    test: Metrics | None = None


def optimizer_from_config(config: RunConfig, cloud: bool = False) -> Adam:
    return Adam(
        lr=config.pc_lr if cloud else config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.eps,
        weight_decay=config.pc_weight_decay if cloud else config.weight_decay,
    )


def node_model_from_config(
    dataset: CitationDataset,
    config: RunConfig,
    variant: str | None = None,
    seed: int | None = None,
) -> NodeClassifier:
    return NodeClassifier.create(
        dataset.num_features,
        dataset.num_classes,
        hidden=config.hidden_dim,
        t=config.hops,
        variant=variant or config.variant,
        r=config.re_dim,
        d_nw=config.nw_dim,
        dropout=config.dropout,
        seed=config.seed if seed is None else seed,
        alpha=config.leaky_alpha,
    )


def cloud_model_from_config(config: RunConfig, num_classes: int, seed=None):
    return PointCloudClassifier.create(
        num_classes,
        hidden=config.pc_hidden,
        k_list=config.k_list,
        phases=config.phases,
        pool_ratio=config.pool_ratio,
        t=config.hops,
        r=config.re_dim,
        d_nw=config.nw_dim,
        seed=config.seed if seed is None else seed,
        alpha=config.leaky_alpha,
    )


def snapshot(model) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in model.named_parameters().items()}


def restore(model, state: dict[str, np.ndarray]) -> None:
    for name, p in model.named_parameters().items():
        p.data[...] = state[name]


### EPOCHS ###


@singledispatch
def train_epoch(model, data, optimizer: Adam, rng, **kwargs) -> Metrics:
    raise ContractError(f"no training loop for {type(model).__name__}")


@train_epoch.register
def _train_node(model: NodeClassifier, data, optimizer: Adam, rng, **kwargs):
    """One full-batch pass over the training nodes."""
    train = data.split.train
    with Tape():
        logits = node_forward(
            model, data.features, data.dataset.graph, data.hopsets, True, rng
        )
        loss = ad.cross_entropy_mean(logits, data.labels, train)
    ad.backward(loss)
    optimizer.step(model.parameters())
    predictions = np.argmax(logits.data[train], axis=1)
    return compute_metrics(
        predictions, data.labels[train], loss.item(), data.num_classes
    )


def cloud_step(model: PointCloudClassifier, points, label: int) -> CloudStep:
    phase_logits = cloud_forward(model, points)
    target = np.array([label])
    phase_losses = [ad.cross_entropy_mean(logits, target) for logits in phase_logits]
    prediction, loss = hierarchical_combine(phase_logits, phase_losses)
    return CloudStep(int(prediction[0]), loss, phase_losses)


@train_epoch.register
def _train_cloud(
    model: PointCloudClassifier,
    data,
    optimizer: Adam,
    rng,
    batch_size: int = 16,
    on_step: Callable[[list[CloudStep]], None] | None = None,
    **kwargs,
):
    """Shuffled mini-batches; the batch loss is the mean of the per-cloud losses.

    Each cloud gets its own tape and backward pass, so only one cloud's graph is
    alive at a time; parameter gradients accumulate until the batch's Adam step.
    """
    order = rng.permutation(len(data))
    predictions = np.zeros(len(data), dtype=np.int64)
    total = 0.0
    for start in range(0, len(order), batch_size):
        batch = order[start : start + batch_size]
        steps = []
        for i in batch:
            with Tape():
                step = cloud_step(model, data.clouds[i], data.labels[i])
                scaled = ad.mul(step.loss, 1.0 / len(batch))
            ad.backward(scaled)
            steps.append(step)
        optimizer.step(model.parameters())
        if on_step is not None:
            on_step(steps)
        predictions[batch] = [step.prediction for step in steps]
        total += sum(step.loss.item() for step in steps)
    return compute_metrics(predictions, data.labels, total / len(data), data.num_classes)


@singledispatch
def evaluate(model, data, mask=None) -> Metrics:
    raise ContractError(f"no evaluation for {type(model).__name__}")


@evaluate.register
def _evaluate_node(model: NodeClassifier, data, mask=None):
    """Eval-mode metrics over ``mask`` (the test nodes by default)."""
    mask = data.split.test if mask is None else np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ContractError("evaluate needs a nonempty mask")
    logits = node_forward(model, data.features, data.dataset.graph, data.hopsets)
    loss = ad.cross_entropy_mean(logits, data.labels, mask).item()
    predictions = np.argmax(logits.data[mask], axis=1)
    return compute_metrics(predictions, data.labels[mask], loss, data.num_classes)


@evaluate.register
def _evaluate_cloud(model: PointCloudClassifier, data, mask=None):
    mask = np.arange(len(data)) if mask is None else np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ContractError("evaluate needs a nonempty mask")
    steps = [cloud_step(model, data.clouds[i], data.labels[i]) for i in mask]
    predictions = np.array([step.prediction for step in steps])
    loss = float(np.mean([step.loss.item() for step in steps]))
    return compute_metrics(predictions, data.labels[mask], loss, data.num_classes)


### FIT LOOPS ###


def fit_node(
    model: NodeClassifier,
    task: NodeTask,
    optimizer: Adam,
    *,
    epochs: int,
    patience: int,
    rng: np.random.Generator,
) -> FitResult:
    """Early stopping on validation accuracy; the best parameters are restored."""
    monitor = task.split.val if len(task.split.val) else task.split.train
    result = FitResult()
    best_state = snapshot(model)
    wait = 0
    for epoch in range(1, epochs + 1):
        train_metrics = train_epoch(model, task, optimizer, rng)
        val_metrics = evaluate(model, task, monitor)
        result.history.append((epoch, "train", train_metrics))
        result.history.append((epoch, "val", val_metrics))
        logger.info(
            "epoch %d: train loss %.4f acc %.4f | val acc %.4f",
            epoch,
            train_metrics.loss,
            train_metrics.oa,
            val_metrics.oa,
        )
        if val_metrics.oa > result.best_val or result.best_epoch == 0:
            result.best_val, result.best_epoch = val_metrics.oa, epoch
            best_state = snapshot(model)
            wait = 0
        else:
            wait += 1
            if wait >= patience:
                logger.info("early stop at epoch %d (best %d)", epoch, result.best_epoch)
                break
    restore(model, best_state)
    result.test = evaluate(model, task, task.split.test)
    result.history.append((result.best_epoch, "test", result.test))
    return result


def fit_cloud(
    model: PointCloudClassifier,
    train_set: SyntheticCloudSet,
    test_set: SyntheticCloudSet,
    optimizer: Adam,
    *,
    epochs: int,
    rng: np.random.Generator,
    batch_size: int = 16,
    on_step: Callable[[list[CloudStep]], None] | None = None,
) -> FitResult:
    result = FitResult()
    for epoch in range(1, epochs + 1):
        train_metrics = train_epoch(
            model, train_set, optimizer, rng, batch_size=batch_size, on_step=on_step
        )
        test_metrics = evaluate(model, test_set)
        result.history.append((epoch, "train", train_metrics))
        result.history.append((epoch, "test", test_metrics))
        logger.info(
            "epoch %d: train loss %.4f acc %.4f | test oa %.4f macc %.4f",
            epoch,
            train_metrics.loss,
            train_metrics.oa,
            test_metrics.oa,
            test_metrics.macc,
        )
    result.best_epoch = epochs
    result.test = evaluate(model, test_set) if epochs == 0 else test_metrics
    return result


### ABLATION ###


@dataclass
class AblationRow:
    variant: str
    accuracies: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))


def run_ablation(
    dataset: CitationDataset,
    config: RunConfig,
    seeds: int,
    variants: Sequence[str] = VARIANTS,
) -> list[AblationRow]:
    """Test accuracy of every variant over ``seeds`` runs.

    The standard split is drawn once from ``config.seed``; random splits are redrawn
    for every run.
    """
    hopsets = exact_hop_sets(dataset.graph, max(config.hops, 1))
    rows = []
    for variant in variants:
        accuracies = []
        for offset in range(seeds):
            seed = config.seed + offset
            split_seed = config.seed if config.split == "standard" else seed
            split = make_split(
                dataset,
                config.split,
                split_seed,
                train_frac=config.train_frac,
                val_frac=config.val_frac,
            )
            model = node_model_from_config(dataset, config, variant, seed)
            result = fit_node(
                model,
                NodeTask(dataset, split, hopsets),
                optimizer_from_config(config),
                epochs=config.epochs,
                patience=config.patience,
                rng=np.random.default_rng(seed),
            )
            accuracies.append(result.test.oa)
            logger.info("%s seed %d: test acc %.4f", variant, seed, result.test.oa)
        rows.append(AblationRow(variant, accuracies))
    return rows
