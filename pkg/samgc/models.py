"""Networks assembled from the convolution and pooling blocks.

``NodeClassifier``: three stacked convolutions with dropout between them and a
fully connected head.

``PointCloudClassifier``: phases of two grouped convolution modules, each group
convolving over its own k-NN graph rebuilt from the current features. Every phase
reads out max and mean pooled features into class logits, and pooling shrinks the
cloud between phases. Phase losses and probabilities are summed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from samgc import autodiff as ad
from samgc.autodiff import Parameter, Tensor
from samgc.errors import ConfigurationError, ContractError
from samgc.graph import Graph, HopSets, build_knn_graph, exact_hop_sets
from samgc.layer import SamgcLayerParams, forward
from samgc.pooling import PoolingParams, pool

logger = logging.getLogger(__name__)


@dataclass
class Metrics:
    oa: float
    macc: float
    loss: float
    per_class_recall: list[float] = field(default_factory=list)


def compute_metrics(predictions, labels, loss: float, num_classes: int | None = None):
    """OA over all rows; mAcc averages recall over the classes present in ``labels``.

    Classes absent from ``labels`` get a NaN recall.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ContractError("metrics need at least one labelled row")
    num_classes = num_classes or int(labels.max()) + 1
    recall = [float("nan")] * num_classes
    for c in np.unique(labels):
        members = labels == c
        recall[int(c)] = float(np.mean(predictions[members] == c))
    present = [r for r in recall if not np.isnan(r)]
    return Metrics(
        oa=float(np.mean(predictions == labels)),
        macc=float(np.mean(present)),
        loss=float(loss),
        per_class_recall=recall,
    )


def _spawn_seeds(seed: int, count: int) -> list[int]:
    return [int(s) for s in np.random.default_rng(seed).integers(0, 2**31, size=count)]


@dataclass
class NodeClassifier:
    layers: list[SamgcLayerParams]
    fc: Parameter
    dropout: float = 0.5

    def __post_init__(self):
        for before, after in zip(self.layers, self.layers[1:]):
            if before.c_out != after.c:
                raise ConfigurationError(
                    f"layer widths do not chain: {before.c_out} -> {after.c}"
                )
        if self.fc.shape[0] != self.layers[-1].c_out:
            raise ConfigurationError(
                f"head expects {self.fc.shape[0]} inputs, last layer gives "
                f"{self.layers[-1].c_out}"
            )

    @classmethod
    def create(
        cls,
        in_dim: int,
        num_classes: int,
        *,
        hidden: int = 64,
        num_layers: int = 3,
        t: int = 2,
        variant: str = "samgc",
        r: int = 16,
        d_nw: int = 16,
        dropout: float = 0.5,
        seed: int = 0,
        alpha: float = 0.01,
    ) -> "NodeClassifier":
        seeds = _spawn_seeds(seed, num_layers + 1)
        widths = [in_dim] + [hidden] * num_layers
        layers = [
            SamgcLayerParams.create(
                widths[i],
                widths[i + 1],
                t=t,
                variant=variant,
                r=r,
                d_nw=d_nw,
                seed=seeds[i],
                alpha=alpha,
            )
            for i in range(num_layers)
        ]
        fc = Parameter.glorot(hidden, num_classes, seeds[-1], name="fc")
        return cls(layers, fc, dropout)

    @property
    def num_classes(self) -> int:
        return self.fc.shape[1]

    @property
    def hops(self) -> int:
        return max(layer.t if layer.variant == "samgc" else 1 for layer in self.layers)

    def named_parameters(self) -> dict[str, Parameter]:
        named = {}
        for i, layer in enumerate(self.layers):
            named.update(layer.named_parameters(f"layer{i}."))
        named["fc"] = self.fc
        return named

    def parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())

    def describe(self) -> dict:
        first = self.layers[0]
        return {
            "kind": "node",
            "in_dim": first.c,
            "num_classes": self.num_classes,
            "hidden": first.c_out,
            "num_layers": len(self.layers),
            "t": first.t,
            "variant": first.variant,
            "r": first.r,
            "d_nw": first.d_nw,
            "dropout": self.dropout,
            "alpha": first.alpha,
        }


def node_forward(
    classifier: NodeClassifier,
    h,
    g: Graph,
    hopsets: HopSets | None,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Logits (n x classes); dropout acts between layers in training mode only."""
    if train_mode and classifier.dropout > 0.0 and rng is None:
        raise ContractError("training-mode forward with dropout needs an rng")
    x = ad.as_tensor(h)
    for i, layer in enumerate(classifier.layers):
        if i > 0 and train_mode:
            x = ad.dropout(x, classifier.dropout, rng)
        x = forward(x, g, hopsets, layer).z
    if train_mode:
        x = ad.dropout(x, classifier.dropout, rng)
    return ad.matmul(x, classifier.fc)


@dataclass
class GroupedSamgc:
    """One convolution per k; outputs are concatenated column-wise."""

    k_list: tuple[int, ...]
    layers: list[SamgcLayerParams]

    @classmethod
    def create(
        cls,
        c: int,
        c_out: int,
        k_list: Sequence[int],
        *,
        t: int = 2,
        r: int = 8,
        d_nw: int = 8,
        seed: int = 0,
        seeds: Sequence[int] | None = None,
        alpha: float = 0.01,
    ) -> "GroupedSamgc":
        if not k_list:
            raise ConfigurationError("a grouped module needs at least one k")
        seeds = list(seeds) if seeds is not None else _spawn_seeds(seed, len(k_list))
        if len(seeds) != len(k_list):
            raise ConfigurationError(f"{len(seeds)} seeds for {len(k_list)} groups")
        layers = [
            SamgcLayerParams.create(c, c_out, t=t, r=r, d_nw=d_nw, seed=s, alpha=alpha)
            for s in seeds
        ]
        return cls(tuple(int(k) for k in k_list), layers)

    @property
    def c(self) -> int:
        return self.layers[0].c

    @property
    def c_out(self) -> int:
        return sum(layer.c_out for layer in self.layers)

    def graphs_for(self, h) -> list[Graph]:
        points = ad.as_tensor(h).data
        if points.shape[0] <= max(self.k_list):
            raise ConfigurationError(
                f"{points.shape[0]} nodes cannot host a {max(self.k_list)}-NN graph"
            )
        return [build_knn_graph(points, k) for k in self.k_list]

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        named = {}
        for i, layer in enumerate(self.layers):
            named.update(layer.named_parameters(f"{prefix}group{i}."))
        return named


def gsamgc_forward(module: GroupedSamgc, h) -> Tensor:
    """Convolve ``h`` over a fresh k-NN graph per group and concatenate."""
    h = ad.as_tensor(h)
    outputs = []
    for g, layer in zip(module.graphs_for(h), module.layers):
        hopsets = exact_hop_sets(g, layer.t)
        outputs.append(forward(h, g, hopsets, layer).z)
    return ad.concat_cols(outputs)


@dataclass
class CloudPhase:
    modules: list[GroupedSamgc]
    readout: Parameter

    @property
    def width(self) -> int:
        return sum(m.c_out for m in self.modules)


def phase_readout(features, readout) -> Tensor:
    """cat(columnwise max, columnwise mean) over nodes, then the phase head."""
    features = ad.as_tensor(features)
    pooled = ad.concat_cols(
        [ad.reduce_rows(features, "max"), ad.reduce_rows(features, "mean")]
    )
    return ad.matmul(pooled, readout)


def hierarchical_combine(
    phase_logits: Sequence[Tensor], phase_losses: Sequence[Tensor]
) -> tuple[np.ndarray, Tensor]:
    """Argmax of the summed phase probabilities, and the summed phase losses."""
    if not phase_logits or len(phase_logits) != len(phase_losses):
        raise ContractError("need one loss per phase and at least one phase")
    total = np.zeros_like(ad.as_tensor(phase_logits[0]).data)
    for logits in phase_logits:
        total += ad.row_softmax(ad.as_tensor(logits).detach()).data
    loss = phase_losses[0]
    for phase_loss in phase_losses[1:]:
        loss = ad.add(loss, phase_loss)
    return np.argmax(total, axis=1), loss


@dataclass
class PointCloudClassifier:
    phases: list[CloudPhase]
    pools: list[PoolingParams]
    num_classes: int
    pool_k: int
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.pools) != len(self.phases) - 1:
            raise ConfigurationError("expected one pooling stage between phases")

    @classmethod
    def create(
        cls,
        num_classes: int,
        *,
        in_dim: int = 3,
        hidden: int = 16,
        k_list: Sequence[int] = (8, 16),
        phases: int = 2,
        pool_ratio: float = 0.5,
        t: int = 2,
        r: int = 8,
        d_nw: int = 8,
        seed: int = 0,
        alpha: float = 0.01,
    ) -> "PointCloudClassifier":
        if phases < 1:
            raise ConfigurationError(f"need at least one phase, got {phases}")
        seeds = iter(_spawn_seeds(seed, 4 * phases))
        group_width = hidden * len(k_list)
        built, pools = [], []
        c = in_dim
        for p in range(phases):
            first = GroupedSamgc.create(
                c, hidden, k_list, t=t, r=r, d_nw=d_nw, seed=next(seeds), alpha=alpha
            )
            second = GroupedSamgc.create(
                group_width,
                hidden,
                k_list,
                t=t,
                r=r,
                d_nw=d_nw,
                seed=next(seeds),
                alpha=alpha,
            )
            phase = CloudPhase(
                [first, second],
                Parameter.glorot(
                    2 * 2 * group_width, num_classes, next(seeds), name="readout"
                ),
            )
            built.append(phase)
            pool_seed = next(seeds)
            if p < phases - 1:
                pools.append(
                    PoolingParams.create(
                        phase.width,
                        hidden,
                        group_width,
                        ratio=pool_ratio,
                        r=r,
                        d_nw=d_nw,
                        seed=pool_seed,
                        alpha=alpha,
                    )
                )
                c = group_width
        settings = {
            "kind": "cloud",
            "num_classes": num_classes,
            "in_dim": in_dim,
            "hidden": hidden,
            "k_list": [int(k) for k in k_list],
            "phases": phases,
            "pool_ratio": pool_ratio,
            "t": t,
            "r": r,
            "d_nw": d_nw,
            "alpha": alpha,
        }
        return cls(built, pools, num_classes, int(min(k_list)), settings)

    def named_parameters(self) -> dict[str, Parameter]:
        named = {}
        for p, phase in enumerate(self.phases):
            for m, module in enumerate(phase.modules):
                named.update(module.named_parameters(f"phase{p}.module{m}."))
            named[f"phase{p}.readout"] = phase.readout
        for p, stage in enumerate(self.pools):
            named.update(stage.named_parameters(f"pool{p}."))
        return named

    def parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())

    def describe(self) -> dict:
        return dict(self.settings)


def cloud_forward(model: PointCloudClassifier, points) -> list[Tensor]:
    """Per-phase logits (1 x classes each) for one point cloud."""
    h = ad.as_tensor(points)
    phase_logits = []
    for p, phase in enumerate(model.phases):
        outputs, x = [], h
        for module in phase.modules:
            x = gsamgc_forward(module, x)
            outputs.append(x)
        features = ad.concat_cols(outputs)
        phase_logits.append(phase_readout(features, phase.readout))
        if p < len(model.pools):
            g = build_knn_graph(features.data, model.pool_k)
            h = pool(features, g, None, model.pools[p]).h_select
    return phase_logits


def build_model(description: dict):
    """Rebuild an untrained model from ``describe()`` output."""
    settings = dict(description)
    kind = settings.pop("kind", None)
    if kind == "node":
        return NodeClassifier.create(
            settings.pop("in_dim"), settings.pop("num_classes"), **settings
        )
    if kind == "cloud":
        return PointCloudClassifier.create(settings.pop("num_classes"), **settings)
    raise ConfigurationError(f"unknown model kind {kind!r}")
