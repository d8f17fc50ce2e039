"""Reader for the two-file Cora distribution (``cora.content`` + ``cora.cites``)."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from samgc.autodiff import Tensor
from samgc.errors import DataError
from samgc.graph import Graph

logger = logging.getLogger(__name__)

CORA_CLASSES = (
    "Case_Based",
    "Genetic_Algorithms",
    "Neural_Networks",
    "Probabilistic_Methods",
    "Reinforcement_Learning",
    "Rule_Learning",
    "Theory",
)


@dataclass(frozen=True, eq=False)
class CitationDataset:
    features: Tensor
    labels: np.ndarray
    graph: Graph
    id_map: dict[str, int]
    class_names: tuple[str, ...]
    dropped_citations: int = 0
    source: str = field(default="", compare=False)

    def __post_init__(self):
        self.labels.flags.writeable = False
        self.features.data.flags.writeable = False

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def num_features(self) -> int:
        return self.features.cols

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def __repr__(self) -> str:
        return (
            f"CitationDataset(n={self.n}, features={self.num_features}, "
            f"classes={self.num_classes}, edges={self.graph.num_edges})"
        )


def _parse_content(path: str, class_names: Sequence[str] | None):
    ids, rows, labels = [], [], []
    seen = set()
    names = list(class_names) if class_names is not None else []
    width = None
    with open(path, "r") as f:
        for line_no, line in enumerate(f, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) < 3:
                raise DataError(f"{path}:{line_no}: expected id, features and label")
            paper_id, values, label = fields[0], fields[1:-1], fields[-1]
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataError(
                    f"{path}:{line_no}: {len(values)} feature fields, expected {width}"
                )
            try:
                row = [float(v) for v in values]
            except ValueError:
                raise DataError(f"{path}:{line_no}: non-numeric feature field") from None
            if label not in names:
                if class_names is not None:
                    raise DataError(f"{path}:{line_no}: unknown label {label!r}")
                names.append(label)
            if paper_id in seen:
                raise DataError(f"{path}:{line_no}: duplicate paper id {paper_id!r}")
            seen.add(paper_id)
            ids.append(paper_id)
            rows.append(row)
            labels.append(names.index(label))
    if not ids:
        raise DataError(f"{path}: no content lines")
    return ids, np.asarray(rows, dtype=np.float64), np.asarray(labels), tuple(names)


def _parse_cites(path: str, id_map: dict[str, int]):
    edges, dropped = [], 0
    with open(path, "r") as f:
        for line_no, line in enumerate(f, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 2:
                raise DataError(f"{path}:{line_no}: expected cited-id and citing-id")
            cited, citing = fields
            if cited not in id_map or citing not in id_map:
                dropped += 1
                continue
            edges.append((id_map[cited], id_map[citing]))
    return edges, dropped


def load_cora(
    content_path: str,
    cites_path: str,
    class_names: Sequence[str] | None = CORA_CLASSES,
    row_normalize: bool = False,
) -> CitationDataset:
    """Parse the content and cites files into an undirected citation graph.

    Node indices follow the first appearance of each paper id in the content file.
    Citations with an endpoint missing from the content file are dropped and counted.
    ``class_names=None`` takes the labels in first-appearance order.
    """
    ids, features, labels, names = _parse_content(content_path, class_names)
    id_map = {paper_id: i for i, paper_id in enumerate(ids)}
    edges, dropped = _parse_cites(cites_path, id_map)
    if dropped:
        logger.warning("dropped %d citations with unknown endpoints", dropped)
    if row_normalize:
        sums = features.sum(axis=1, keepdims=True)
        features = features / np.where(sums > 0, sums, 1.0)
    graph = Graph.from_edges(len(ids), edges)
    dataset = CitationDataset(
        features=Tensor(features),
        labels=labels.astype(np.int64),
        graph=graph,
        id_map=id_map,
        class_names=names,
        dropped_citations=dropped,
        source=os.path.dirname(content_path),
    )
    logger.info("loaded %r", dataset)
    return dataset


def load_cora_dir(data_dir: str, row_normalize: bool = False) -> CitationDataset:
    return load_cora(
        os.path.join(data_dir, "cora.content"),
        os.path.join(data_dir, "cora.cites"),
        row_normalize=row_normalize,
    )
