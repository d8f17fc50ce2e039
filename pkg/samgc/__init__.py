"""Structure-aware multi-hop graph convolution on a small numpy autodiff engine."""

from samgc.autodiff import Adam, Parameter, Tape, Tensor, backward
from samgc.errors import SamgcError
from samgc.graph import Graph, HopSets, build_knn_graph, exact_hop_sets
from samgc.layer import VARIANTS, SamgcLayerParams
from samgc.models import NodeClassifier, PointCloudClassifier

__all__ = [
    "Adam",
    "Graph",
    "HopSets",
    "NodeClassifier",
    "Parameter",
    "PointCloudClassifier",
    "SamgcError",
    "SamgcLayerParams",
    "Tape",
    "Tensor",
    "VARIANTS",
    "backward",
    "build_knn_graph",
    "exact_hop_sets",
]
