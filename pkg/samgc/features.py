"""Structural features in feature space: angle, distance and relational embedding.

The per-node functions mirror the definitions one neighbor set at a time.
``neighbor_bundle`` computes the same quantities for every edge of a graph in one
batch and is what the convolution layer uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from samgc import autodiff as ad
from samgc.autodiff import Parameter, Tensor
from samgc.errors import ShapeError
from samgc.graph import Graph

ZERO_NORM = 1e-12


@dataclass
class StructuralParams:
    w_gb: Parameter
    w_re: Parameter
    alpha: float = 0.01

    @classmethod
    def create(cls, c: int, r: int = 16, seed: int = 0, alpha: float = 0.01):
        rng = np.random.default_rng(seed)
        seeds = rng.integers(0, 2**31, size=2)
        return cls(
            w_gb=Parameter.glorot(c, c, int(seeds[0]), name="w_gb"),
            w_re=Parameter.glorot(c, r, int(seeds[1]), name="w_re"),
            alpha=alpha,
        )

    @property
    def c(self) -> int:
        return self.w_gb.shape[0]

    @property
    def r(self) -> int:
        return self.w_re.shape[1]

    def parameters(self) -> list[Parameter]:
        return [self.w_gb, self.w_re]


@dataclass
class NeighborBundle:
    """Edge-aligned features; entry e describes neighbor cols[e] of node rows[e]."""

    rows: np.ndarray
    cols: np.ndarray
    diffs: Tensor
    base: Tensor
    fa: Tensor
    fd: Tensor
    re: Tensor


def difference_vectors(h, g: Graph, v: int) -> Tensor:
    """g_uv = h_u - h_v for every neighbor u of v, ascending u."""
    neighbors = g.neighbors(v)
    return ad.sub(ad.gather_rows(h, neighbors), ad.gather_rows(h, [v]))


def base_vector(diffs, params: StructuralParams) -> Tensor:
    """Columnwise max of sigma(g_uv . W_gb); the zero vector when there are no neighbors."""
    diffs = ad.as_tensor(diffs)
    if diffs.rows == 0:
        return Tensor(np.zeros((1, params.c)))
    return ad.reduce_rows(ad.relu(ad.matmul(diffs, params.w_gb), params.alpha), "max")


def feature_angle(g_uv, g_b) -> Tensor:
    """Cosine between each difference row and the base vector (0 for zero norms)."""
    g_uv = ad.as_tensor(g_uv)
    g_b = ad.as_tensor(g_b)
    if g_b.rows == 1 and g_uv.rows != 1:
        g_b = ad.gather_rows(g_b, np.zeros(g_uv.rows, dtype=np.int64))
    return ad.cosine_rows(g_uv, g_b, ZERO_NORM)


def feature_distance(h_u, h_v) -> Tensor:
    h_u, h_v = ad.as_tensor(h_u), ad.as_tensor(h_v)
    if h_u.cols != h_v.cols:
        raise ShapeError(f"feature_distance: widths {h_u.cols} and {h_v.cols}")
    return ad.abs_(ad.sub(h_u, h_v))


def relational_embedding(h_u, h_v, params: StructuralParams) -> Tensor:
    return ad.relu(ad.matmul(ad.sub(h_u, h_v), params.w_re), params.alpha)


def neighbor_bundle(h, g: Graph, params: StructuralParams) -> NeighborBundle:
    """All structural features for every edge of ``g``.

    The two MLPs are applied to node features first and then differenced, which
    equals applying them to g_uv because both are linear before sigma.
    """
    h = ad.as_tensor(h)
    _, pick_v, difference = g.edge_selectors
    diffs = ad.sparse_matmul(difference, h)

    scored = ad.sparse_matmul(difference, ad.matmul(h, params.w_gb))
    base = ad.segment_max(ad.relu(scored, params.alpha), g.row_offsets)
    base_per_edge = ad.sparse_matmul(pick_v, base)

    fa = ad.cosine_rows(diffs, base_per_edge, ZERO_NORM)
    fd = ad.abs_(diffs)
    re = ad.relu(
        ad.sparse_matmul(difference, ad.matmul(h, params.w_re)), params.alpha
    )
    return NeighborBundle(g.edge_rows, g.targets, diffs, base, fa, fd, re)
