"""The structure-aware multi-hop graph convolution and its ablation variants.

Variants, from plain to full:

    graphsage  h' = s(W . cat(h_v, mean h_u))
    sagc       h' = s(W . cat(h_v, mean cat(h_u, fa, fd, re)))
    nwa_sagc   h' = s(W . cat(h_v, mean cat(h_u, fa, fd, re, nw_u)))
    samgc      h' = s(W . cat(h_v, af, nh_2, ..., nh_t))
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from samgc import autodiff as ad
from samgc.autodiff import Parameter, Tensor
from samgc.errors import ConfigurationError, ContractError, ShapeError
from samgc.features import NeighborBundle, StructuralParams, neighbor_bundle
from samgc.graph import Graph, HopSets

logger = logging.getLogger(__name__)

VARIANTS = ("graphsage", "sagc", "nwa_sagc", "samgc")


def input_width(variant: str, c: int, r: int, d_nw: int, t: int) -> int:
    """Row count of W for the given variant."""
    if variant == "graphsage":
        return 2 * c
    if variant == "sagc":
        return c + (2 * c + 1 + r)
    if variant == "nwa_sagc":
        return c + (2 * c + 1 + r + d_nw)
    if variant == "samgc":
        return c + (2 * c + 1 + r + d_nw) + c * (t - 1)
    raise ConfigurationError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


@dataclass
class SamgcLayerParams:
    w: Parameter
    structural: StructuralParams | None
    w_nw: Parameter | None
    t: int
    variant: str
    c: int
    r: int
    d_nw: int
    c_out: int
    alpha: float = 0.01

    @classmethod
    def create(
        cls,
        c: int,
        c_out: int,
        *,
        t: int = 2,
        variant: str = "samgc",
        r: int = 16,
        d_nw: int = 16,
        seed: int = 0,
        alpha: float = 0.01,
    ) -> "SamgcLayerParams":
        if t < 1:
            raise ConfigurationError(f"hop count must be >= 1, got {t}")
        width = input_width(variant, c, r, d_nw, t)
        seeds = np.random.default_rng(seed).integers(0, 2**31, size=3)
        structural = w_nw = None
        if variant != "graphsage":
            structural = StructuralParams.create(c, r, int(seeds[1]), alpha)
        if variant in ("nwa_sagc", "samgc"):
            w_nw = Parameter.glorot(2 * c + 1 + r, d_nw, int(seeds[2]), name="w_nw")
        return cls(
            w=Parameter.glorot(width, c_out, int(seeds[0]), name="w"),
            structural=structural,
            w_nw=w_nw,
            t=t,
            variant=variant,
            c=c,
            r=r,
            d_nw=d_nw,
            c_out=c_out,
            alpha=alpha,
        )

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        named = {f"{prefix}w": self.w}
        if self.structural is not None:
            named[f"{prefix}w_gb"] = self.structural.w_gb
            named[f"{prefix}w_re"] = self.structural.w_re
        if self.w_nw is not None:
            named[f"{prefix}w_nw"] = self.w_nw
        return named

    def parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())

    def describe(self) -> dict:
        return {
            "c": self.c,
            "c_out": self.c_out,
            "t": self.t,
            "variant": self.variant,
            "r": self.r,
            "d_nw": self.d_nw,
            "alpha": self.alpha,
        }


@dataclass
class LayerOutput:
    z: Tensor
    bundle: NeighborBundle | None = None


def neighbor_wise(h_u, fa, fd, re, params: SamgcLayerParams) -> Tensor:
    """nw_u = s(cat(h_u, fa_uv, fd_uv, re_uv) . W_nw), one row per neighbor."""
    return ad.relu(ad.matmul(ad.concat_cols([h_u, fa, fd, re]), params.w_nw))


def _neighbor_wise_edges(h: Tensor, g: Graph, bundle: NeighborBundle, params):
    # cat(h_u, ...) . W_nw split into row blocks of W_nw; the h_u block is
    # projected per node and then gathered onto the edges.
    c, r, w = params.c, params.r, params.w_nw
    pick_u = g.edge_selectors[0]
    pre = ad.sparse_matmul(pick_u, ad.matmul(h, ad.slice_rows(w, 0, c)))
    pre = ad.add(pre, ad.matmul(bundle.fa, ad.slice_rows(w, c, c + 1)))
    pre = ad.add(pre, ad.matmul(bundle.fd, ad.slice_rows(w, c + 1, 2 * c + 1)))
    pre = ad.add(pre, ad.matmul(bundle.re, ad.slice_rows(w, 2 * c + 1, 2 * c + 1 + r)))
    return ad.relu(pre)


def one_hop_aggregate(h, g: Graph, bundle: NeighborBundle, nw=None) -> Tensor:
    """Row v is the mean over N_1(v) of cat(h_u, fa, fd, re[, nw]); zeros if isolated."""
    h = ad.as_tensor(h)
    parts = [
        ad.sparse_matmul(g.neighbor_mean, h),
        ad.sparse_matmul(g.edge_mean, bundle.fa),
        ad.sparse_matmul(g.edge_mean, bundle.fd),
        ad.sparse_matmul(g.edge_mean, bundle.re),
    ]
    if nw is not None:
        parts.append(ad.sparse_matmul(g.edge_mean, nw))
    return ad.concat_cols(parts)


def multi_hop_aggregate(h, hopsets: HopSets | None, t: int) -> Tensor:
    """Row v is cat(mean of h over N_2(v), ..., mean over N_t(v)); width C(t-1)."""
    h = ad.as_tensor(h)
    if t <= 1:
        return Tensor(np.zeros((h.rows, 0)))
    if hopsets is None or hopsets.t < t:
        depth = 0 if hopsets is None else hopsets.t
        raise ConfigurationError(f"hop sets reach {depth} hops, layer needs {t}")
    return ad.concat_cols(
        [ad.sparse_matmul(hopsets.mean_operator(i), h) for i in range(2, t + 1)]
    )


def integrate(h_v, af, nh, params: SamgcLayerParams) -> Tensor:
    """h'_v = s(W . cat(h_v, af, nh))."""
    joined = ad.concat_cols([h_v, af, nh])
    if joined.cols != params.w.shape[0]:
        raise ShapeError(
            f"integrate: input width {joined.cols} does not match W "
            f"{params.w.shape[0]}x{params.w.shape[1]}"
        )
    return ad.relu(ad.matmul(joined, params.w))


def variant_forward(h, g: Graph, hopsets: HopSets | None, params: SamgcLayerParams):
    h = ad.as_tensor(h)
    if h.cols != params.c:
        raise ShapeError(f"layer expects {params.c} input columns, got {h.cols}")
    if h.rows != g.n:
        raise ShapeError(f"{h.rows} feature rows for a graph of {g.n} nodes")
    if hopsets is not None and hopsets.n != g.n:
        raise ContractError("hop sets were computed on a different graph")
    empty = Tensor(np.zeros((h.rows, 0)))

    if params.variant == "graphsage":
        af = ad.sparse_matmul(g.neighbor_mean, h)
        return LayerOutput(integrate(h, af, empty, params))

    bundle = neighbor_bundle(h, g, params.structural)
    if params.variant == "sagc":
        af = one_hop_aggregate(h, g, bundle)
        return LayerOutput(integrate(h, af, empty, params), bundle)

    nw = _neighbor_wise_edges(h, g, bundle, params)
    af = one_hop_aggregate(h, g, bundle, nw)
    if params.variant == "nwa_sagc":
        return LayerOutput(integrate(h, af, empty, params), bundle)

    nh = multi_hop_aggregate(h, hopsets, params.t)
    return LayerOutput(integrate(h, af, nh, params), bundle)


def forward(h, g: Graph, hopsets: HopSets | None, params: SamgcLayerParams):
    """One convolution over ``g``; hop sets must reach at least ``params.t`` hops."""
    return variant_forward(h, g, hopsets, params)
