"""Reverse-mode differentiation over dense 2-D float64 tensors.

Every operation in this module computes its value eagerly. When a ``Tape`` is
active and at least one input requires a gradient, the operation is appended to
the tape together with its backward rule; ``backward(loss)`` then walks the tape
once in reverse and drops its record. A tape is single-use: a second
backward without a fresh forward pass is a contract error.

    with Tape():
        loss = cross_entropy_mean(matmul(x, w.value), labels)
    backward(loss)
"""

from __future__ import annotations

import logging
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from samgc.errors import ContractError, DataError, ShapeError

logger = logging.getLogger(__name__)

_ACTIVE_TAPE: ContextVar["Tape | None"] = ContextVar("samgc_active_tape", default=None)


class Tensor:
    """Dense row-major matrix with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        array = np.array(data, dtype=np.float64)
        if array.ndim == 0:
            array = array.reshape(1, 1)
        elif array.ndim == 1:
            array = array.reshape(1, -1)
        elif array.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {array.shape}")
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(array) if requires_grad else None
        self.name = name
        self._tape = None

    @classmethod
    def _wrap(cls, array: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = array
        out.requires_grad = False
        out.grad = None
        out.name = None
        out._tape = None
        return out

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.rows}x{self.cols}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data.copy())

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        name = f", name={self.name}" if self.name else ""
        return f"Tensor({self.rows}x{self.cols}{grad}{name})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter:
    """A learnable tensor plus its Adam moment estimates."""

    __slots__ = ("value", "adam_m", "adam_v", "step_count")

    def __init__(self, data, name: str | None = None):
        self.value = Tensor(data, requires_grad=True, name=name)
        self.adam_m = np.zeros_like(self.value.data)
        self.adam_v = np.zeros_like(self.value.data)
        self.step_count = 0

    @classmethod
    def glorot(cls, rows: int, cols: int, seed: int, name: str | None = None):
        return cls(glorot_init(rows, cols, seed).data, name=name)

    @property
    def name(self) -> str | None:
        return self.value.name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def data(self) -> np.ndarray:
        return self.value.data

    @property
    def grad(self) -> np.ndarray:
        return self.value.grad

    def __repr__(self) -> str:
        return f"Parameter({self.name}, {self.shape[0]}x{self.shape[1]})"


@dataclass(frozen=True)
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of the operations of one forward pass."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.consumed = False
        self._token = None

    def __enter__(self) -> "Tape":
        if self.consumed:
            raise ContractError("tape already consumed; record a new forward pass")
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc_info) -> bool:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None
        return False

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: Node) -> None:
        if self.consumed:
            raise ContractError("cannot record onto a consumed tape")
        self.nodes.append(node)

    def backward(self, loss: Tensor) -> None:
        if loss.shape != (1, 1):
            raise ContractError(
                f"backward needs a 1x1 loss, got {loss.rows}x{loss.cols}"
            )
        if loss._tape is not self:
            raise ContractError("loss was not recorded on this tape")
        if self.consumed:
            raise ContractError("tape already consumed; run a new forward pass")
        self.consumed = True

        loss.grad = np.ones((1, 1))
        for node in reversed(self.nodes):
            upstream = node.output.grad
            if upstream is None:
                continue
            for tensor, grad in zip(node.inputs, node.backward(upstream)):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor.grad is None:
                    tensor.grad = np.array(grad, dtype=np.float64)
                else:
                    tensor.grad += grad
        logger.debug("backward visited %d tape nodes", len(self.nodes))
        self.nodes = []


def backward(loss: Tensor) -> None:
    if loss._tape is None:
        raise ContractError("loss was not produced on a recorded tape")
    loss._tape.backward(loss)


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE.get()


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    if isinstance(value, Parameter):
        return value.value
    return Tensor(value)


def _emit(data: np.ndarray, op: str, inputs: Sequence[Tensor], rule) -> Tensor:
    out = Tensor._wrap(data)
    tape = _ACTIVE_TAPE.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._tape = tape
        tape.record(Node(op, tuple(inputs), out, rule))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True)


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    for x, y in zip(a.shape, b.shape):
        if x != y and x != 1 and y != 1:
            raise ShapeError(
                f"{op}: cannot combine {a.rows}x{a.cols} with {b.rows}x{b.cols}"
            )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul: {a.rows}x{a.cols} @ {b.rows}x{b.cols}")
    left, right = a.data, b.data
    return _emit(left @ right, "matmul", (a, b), lambda g: (g @ right.T, left.T @ g))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return _emit(
        a.data + b.data,
        "add",
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return _emit(
        a.data - b.data,
        "sub",
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    left, right = a.data, b.data
    return _emit(
        left * right,
        "mul",
        (a, b),
        lambda g: (
            _unbroadcast(g * right, left.shape),
            _unbroadcast(g * left, right.shape),
        ),
    )


def abs_(x) -> Tensor:
    x = as_tensor(x)
    sign = np.sign(x.data)
    return _emit(np.abs(x.data), "abs", (x,), lambda g: (g * sign,))


def relu(x, alpha: float = 0.0) -> Tensor:
    """max(0, x), or the leaky variant with slope ``alpha`` below zero."""
    x = as_tensor(x)
    slope = np.where(x.data > 0.0, 1.0, alpha)
    return _emit(x.data * slope, "relu", (x,), lambda g: (g * slope,))


def transpose(x) -> Tensor:
    x = as_tensor(x)
    return _emit(x.data.T.copy(), "transpose", (x,), lambda g: (g.T,))


def concat_cols(parts: Sequence) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("concat_cols needs at least one part")
    rows = parts[0].rows
    for p in parts[1:]:
        if p.rows != rows:
            raise ShapeError(
                f"concat_cols: row mismatch {rows} vs {p.rows} ({p.rows}x{p.cols})"
            )
    bounds = np.cumsum([0] + [p.cols for p in parts])

    def rule(g):
        return [g[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]

    return _emit(np.concatenate([p.data for p in parts], axis=1), "concat", parts, rule)


def slice_rows(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    if not 0 <= start <= stop <= x.rows:
        raise ShapeError(f"slice_rows: [{start}, {stop}) outside {x.rows} rows")
    shape = x.shape

    def rule(g):
        full = np.zeros(shape)
        full[start:stop] = g
        return (full,)

    return _emit(x.data[start:stop].copy(), "slice_rows", (x,), rule)


def gather_rows(x, index) -> Tensor:
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    shape = x.shape

    def rule(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return _emit(x.data[index], "gather_rows", (x,), rule)


def sparse_matmul(operator: sp.spmatrix, x) -> Tensor:
    """Fixed sparse operator times a tensor; only the tensor is differentiable."""
    x = as_tensor(x)
    if operator.shape[1] != x.rows:
        raise ShapeError(
            f"sparse_matmul: {operator.shape[0]}x{operator.shape[1]} @ {x.rows}x{x.cols}"
        )
    operator = sp.csr_matrix(operator)
    value = np.asarray(operator @ x.data)

    def rule(g):
        return (np.asarray(operator.T @ g),)

    return _emit(value, "sparse_matmul", (x,), rule)


def reduce_rows(x, mode: str) -> Tensor:
    x = as_tensor(x)
    m, n = x.shape
    if m == 0:
        raise ContractError("reduce_rows over zero rows")
    if mode == "max":
        winners = np.argmax(x.data, axis=0)
        columns = np.arange(n)

        def rule(g):
            full = np.zeros((m, n))
            full[winners, columns] = g[0]
            return (full,)

        return _emit(x.data[winners, columns][None, :], "reduce_max", (x,), rule)
    if mode == "mean":
        return _emit(
            x.data.mean(axis=0, keepdims=True),
            "reduce_mean",
            (x,),
            lambda g: (np.broadcast_to(g / m, (m, n)),),
        )
    raise ContractError(f"unknown reduction mode {mode!r}")


def segment_max(x, offsets) -> Tensor:
    """Columnwise max over contiguous row segments; empty segments give zeros.

    The gradient of each output entry goes to the lowest row attaining the max.
    """
    x = as_tensor(x)
    offsets = np.asarray(offsets, dtype=np.int64)
    if offsets[0] != 0 or offsets[-1] != x.rows or np.any(np.diff(offsets) < 0):
        raise ShapeError(f"segment_max: offsets do not partition {x.rows} rows")
    num_segments, cols = len(offsets) - 1, x.cols
    counts = np.diff(offsets)
    filled = np.flatnonzero(counts > 0)
    value = np.zeros((num_segments, cols))
    winners = np.zeros((len(filled), cols), dtype=np.int64)
    if len(filled):
        starts = offsets[:-1][filled]
        value[filled] = np.maximum.reduceat(x.data, starts, axis=0)
        segment_of_row = np.repeat(np.arange(num_segments), counts)
        hit = x.data == value[segment_of_row]
        row_ids = np.where(hit, np.arange(x.rows)[:, None], x.rows)
        winners = np.minimum.reduceat(row_ids, starts, axis=0)
    columns = np.arange(cols)[None, :]
    shape = x.shape

    def rule(g):
        full = np.zeros(shape)
        full[winners, columns] = g[filled]
        return (full,)

    return _emit(value, "segment_max", (x,), rule)


def cosine_rows(a, b, eps: float = 1e-12) -> Tensor:
    """Row-wise cosine similarity as a column; 0 where either norm is below eps."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"cosine_rows: {a.rows}x{a.cols} vs {b.rows}x{b.cols}")
    left, right = a.data, b.data
    norm_a = np.linalg.norm(left, axis=1, keepdims=True)
    norm_b = np.linalg.norm(right, axis=1, keepdims=True)
    valid = (norm_a >= eps) & (norm_b >= eps)
    safe_a = np.where(valid, norm_a, 1.0)
    safe_b = np.where(valid, norm_b, 1.0)
    dot = (left * right).sum(axis=1, keepdims=True)
    cos = np.where(valid, np.clip(dot / (safe_a * safe_b), -1.0, 1.0), 0.0)

    def rule(g):
        g = np.where(valid, g, 0.0)
        grad_a = g * (right / (safe_a * safe_b) - cos * left / safe_a**2)
        grad_b = g * (left / (safe_a * safe_b) - cos * right / safe_b**2)
        return grad_a, grad_b

    return _emit(cos, "cosine_rows", (a, b), rule)


def row_softmax(x) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)

    def rule(g):
        return (probs * (g - (g * probs).sum(axis=1, keepdims=True)),)

    return _emit(probs, "row_softmax", (x,), rule)


def cross_entropy_mean(logits, labels, mask=None) -> Tensor:
    """Mean negative log-likelihood over the masked rows (all rows by default)."""
    logits = as_tensor(logits)
    m, c = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (m,):
        raise ShapeError(f"cross_entropy_mean: {labels.size} labels for {m} rows")
    rows = np.arange(m) if mask is None else np.asarray(mask, dtype=np.int64)
    if rows.size == 0:
        raise ContractError("cross_entropy_mean over an empty mask")
    if rows.min() < 0 or rows.max() >= m:
        raise ContractError(f"mask rows outside [0, {m})")
    targets = labels[rows]
    bad = np.flatnonzero((targets < 0) | (targets >= c))
    if bad.size:
        row = int(rows[bad[0]])
        raise DataError(f"label {labels[row]} at row {row} outside [0, {c})")

    picked = logits.data[rows]
    shifted = picked - picked.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    k = rows.size
    loss = -log_probs[np.arange(k), targets].mean()

    def rule(g):
        delta = np.exp(log_probs)
        delta[np.arange(k), targets] -= 1.0
        full = np.zeros((m, c))
        np.add.at(full, rows, delta * (g[0, 0] / k))
        return (full,)

    return _emit(np.array([[loss]]), "cross_entropy", (logits,), rule)


def dropout(x, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; a zero rate returns ``x`` untouched."""
    x = as_tensor(x)
    if rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _emit(x.data * keep, "dropout", (x,), lambda g: (g * keep,))


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return _emit(
        np.array([[x.data.sum()]]),
        "sum",
        (x,),
        lambda g: (np.full(shape, g[0, 0]),),
    )


def glorot_init(rows: int, cols: int, rng_seed: int) -> Tensor:
    if rows < 1 or cols < 1:
        raise ShapeError(f"glorot_init needs positive dims, got {rows}x{cols}")
    bound = np.sqrt(6.0 / (rows + cols))
    rng = np.random.default_rng(rng_seed)
    return Tensor(rng.uniform(-bound, bound, size=(rows, cols)))


def adam_step(
    params: Sequence[Parameter],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> None:
    """Bias-corrected Adam with decoupled weight decay; zeroes gradients after."""
    for p in params:
        grad = p.value.grad
        data = p.value.data
        p.step_count += 1
        if weight_decay:
            data -= lr * weight_decay * data
        p.adam_m *= beta1
        p.adam_m += (1.0 - beta1) * grad
        p.adam_v *= beta2
        p.adam_v += (1.0 - beta2) * (grad * grad)
        m_hat = p.adam_m / (1.0 - beta1**p.step_count)
        v_hat = p.adam_v / (1.0 - beta2**p.step_count)
        data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        grad.fill(0.0)


@dataclass
class Adam:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def step(self, params: Sequence[Parameter]) -> None:
        adam_step(params, self.lr, self.beta1, self.beta2, self.eps, self.weight_decay)