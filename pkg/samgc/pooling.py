"""Score-based graph pooling: embed, score, rescale, refine, keep the top w nodes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from samgc import autodiff as ad
from samgc.autodiff import Parameter, Tensor
from samgc.errors import ConfigurationError
from samgc.graph import Graph, HopSets, induced_subgraph
from samgc.layer import SamgcLayerParams, forward

logger = logging.getLogger(__name__)


@dataclass
class PoolingParams:
    w_p: Parameter
    w_1: Parameter
    inner: SamgcLayerParams
    w: int | None = None
    ratio: float | None = 0.5

    @classmethod
    def create(
        cls,
        c: int,
        c_embed: int,
        c_out: int,
        *,
        ratio: float | None = 0.5,
        w: int | None = None,
        r: int = 16,
        d_nw: int = 16,
        seed: int = 0,
        alpha: float = 0.01,
    ) -> "PoolingParams":
        if w is None and (ratio is None or not 0.0 < ratio <= 1.0):
            raise ConfigurationError(f"pooling ratio must lie in (0, 1], got {ratio}")
        seeds = np.random.default_rng(seed).integers(0, 2**31, size=3)
        inner = SamgcLayerParams.create(
            c_embed, c_out, t=1, r=r, d_nw=d_nw, seed=int(seeds[2]), alpha=alpha
        )
        return cls(
            w_p=Parameter.glorot(c, c_embed, int(seeds[0]), name="w_p"),
            w_1=Parameter.glorot(c_embed, 1, int(seeds[1]), name="w_1"),
            inner=inner,
            w=w,
            ratio=ratio,
        )

    def resolve_w(self, n: int) -> int:
        if self.w is not None:
            return self.w
        return max(1, math.ceil(self.ratio * n))

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        named = {f"{prefix}w_p": self.w_p, f"{prefix}w_1": self.w_1}
        named.update(self.inner.named_parameters(f"{prefix}inner."))
        return named

    def parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())

    def describe(self) -> dict:
        return {
            "c": self.w_p.shape[0],
            "c_embed": self.w_p.shape[1],
            "c_out": self.inner.c_out,
            "ratio": self.ratio,
            "w": self.w,
            "r": self.inner.r,
            "d_nw": self.inner.d_nw,
            "alpha": self.inner.alpha,
        }


@dataclass
class PoolingOutput:
    selected: np.ndarray
    h_select: Tensor
    scores: np.ndarray
    score_tensor: Tensor
    source: Graph

    @cached_property
    def pooled_graph(self) -> Graph:
        """Subgraph of ``source`` induced by ``selected``, built on first access."""
        return induced_subgraph(self.source, self.selected)


def score_nodes(h, params: PoolingParams) -> tuple[Tensor, Tensor]:
    """Embedded features and an (n x 1) softmax over all nodes of W_1 . h_hat."""
    embedded = ad.relu(ad.matmul(h, params.w_p))
    logits = ad.matmul(embedded, params.w_1)
    scores = ad.transpose(ad.row_softmax(ad.transpose(logits)))
    return embedded, scores


def rank_nodes(scores: np.ndarray, w: int) -> np.ndarray:
    """Ascending indices of the w best scores; equal scores prefer the lower index."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    order = np.lexsort((np.arange(scores.size), -scores))
    return np.sort(order[:w])


def pool(h, g: Graph, hopsets: HopSets | None, params: PoolingParams) -> PoolingOutput:
    w = params.resolve_w(g.n)
    if not 1 <= w <= g.n:
        raise ConfigurationError(f"cannot keep {w} of {g.n} nodes")
    embedded, scores = score_nodes(h, params)
    rescaled = ad.mul(embedded, scores)
    refined = forward(rescaled, g, hopsets, params.inner).z
    values = scores.data[:, 0].copy()
    selected = rank_nodes(values, w)
    logger.debug("pooling kept %d of %d nodes", w, g.n)
    return PoolingOutput(
        selected=selected,
        h_select=ad.gather_rows(refined, selected),
        scores=values,
        score_tensor=scores,
        source=g,
    )
