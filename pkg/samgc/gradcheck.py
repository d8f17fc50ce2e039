"""Central finite-difference checks of tape gradients."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from samgc import autodiff as ad
from samgc.autodiff import Parameter, Tape, Tensor
from samgc.graph import Graph, exact_hop_sets
from samgc.layer import SamgcLayerParams, forward

logger = logging.getLogger(__name__)

STEP = 1e-5


def numerical_gradient(evaluate: Callable[[], float], array: np.ndarray, h=STEP):
    """Central differences of ``evaluate()`` w.r.t. every entry of ``array`` (in place)."""
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + h
        upper = evaluate()
        array[index] = original - h
        lower = evaluate()
        array[index] = original
        grad[index] = (upper - lower) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(
    build_loss: Callable[[], Tensor],
    leaves: Mapping[str, Parameter | Tensor],
    h: float = STEP,
) -> dict[str, float]:
    """Relative error between tape and finite-difference gradients per leaf."""
    tensors = {name: ad.as_tensor(leaf) for name, leaf in leaves.items()}
    for tensor in tensors.values():
        tensor.grad = np.zeros_like(tensor.data)
    with Tape():
        loss = build_loss()
    ad.backward(loss)
    analytic = {name: tensor.grad.copy() for name, tensor in tensors.items()}

    errors = {}
    for name, tensor in tensors.items():
        numeric = numerical_gradient(lambda: build_loss().item(), tensor.data, h)
        errors[name] = relative_error(analytic[name], numeric)
        tensor.grad = np.zeros_like(tensor.data)
    return errors


@dataclass
class GradcheckReport:
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def passed(self, threshold: float = 1e-3) -> bool:
        return self.max_error < threshold


def random_graph(n: int, p: float, rng: np.random.Generator) -> Graph:
    upper = np.triu(rng.random((n, n)) < p, k=1)
    return Graph.from_edges(n, np.argwhere(upper))


def _leaf(rng, rows, cols, name):
    return Tensor(rng.uniform(-2.0, 2.0, size=(rows, cols)), requires_grad=True, name=name)


def op_checks(rng: np.random.Generator) -> dict[str, float]:
    a = _leaf(rng, 3, 4, "a")
    b = _leaf(rng, 4, 2, "b")
    c = _leaf(rng, 3, 4, "c")
    col = _leaf(rng, 3, 1, "col")
    labels = rng.integers(0, 4, size=3)
    offsets = np.array([0, 2, 2, 3])
    operator = random_graph(3, 0.9, rng).neighbor_mean
    weights = rng.normal(size=(3, 4))

    def weighted(t):
        return ad.sum_all(ad.mul(t, weights[: t.rows, : t.cols]))

    cases = {
        "matmul": (lambda: ad.sum_all(ad.matmul(a, b)), {"a": a, "b": b}),
        "concat_cols": (lambda: weighted(ad.concat_cols([col, a])), {"a": a, "col": col}),
        "relu": (lambda: weighted(ad.relu(a, 0.01)), {"a": a}),
        "abs": (lambda: weighted(ad.abs_(a)), {"a": a}),
        "mul_broadcast": (lambda: weighted(ad.mul(a, col)), {"a": a, "col": col}),
        "reduce_max": (lambda: weighted(ad.reduce_rows(a, "max")), {"a": a}),
        "reduce_mean": (lambda: weighted(ad.reduce_rows(a, "mean")), {"a": a}),
        "row_softmax": (lambda: weighted(ad.row_softmax(a)), {"a": a}),
        "cross_entropy": (lambda: ad.cross_entropy_mean(a, labels), {"a": a}),
        "segment_max": (lambda: weighted(ad.segment_max(a, offsets)), {"a": a}),
        "cosine_rows": (lambda: weighted(ad.cosine_rows(a, c)), {"a": a, "c": c}),
        "sparse_matmul": (lambda: weighted(ad.sparse_matmul(operator, a)), {"a": a}),
        "transpose": (lambda: ad.sum_all(ad.matmul(ad.transpose(a), c)), {"a": a, "c": c}),
    }
    errors = {}
    for op, (build, leaves) in cases.items():
        for name, err in check_gradients(build, leaves).items():
            errors[f"{op}.{name}"] = err
    return errors


def layer_checks(rng: np.random.Generator, seed: int) -> dict[str, float]:
    """Full convolution plus a linear head on a random 8-node graph."""
    g = random_graph(8, 0.35, rng)
    hopsets = exact_hop_sets(g, 2)
    h = Tensor(rng.uniform(-2.0, 2.0, size=(8, 5)))
    labels = rng.integers(0, 3, size=8)
    params = SamgcLayerParams.create(5, 4, t=2, r=3, d_nw=4, seed=seed)
    head = Parameter.glorot(4, 3, seed + 1, name="head")

    def build():
        z = forward(h, g, hopsets, params).z
        return ad.cross_entropy_mean(ad.matmul(z, head), labels)

    leaves = dict(params.named_parameters("layer."))
    leaves["head"] = head
    return check_gradients(build, leaves)


def run_suite(seed: int = 0) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    report = GradcheckReport()
    report.errors.update(op_checks(rng))
    report.errors.update(layer_checks(rng, seed))
    logger.info("gradient check: max relative error %.3e", report.max_error)
    return report
