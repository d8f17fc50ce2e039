import os

import numpy as np
import pytest

from datasets.cora import CORA_CLASSES, CitationDataset, load_cora_dir
from samgc.autodiff import Tensor
from samgc.gradcheck import random_graph
from samgc.graph import Graph

CORA_DIR = os.environ.get("SAMGC_CORA_DIR")

requires_cora = pytest.mark.skipif(
    not (CORA_DIR and os.path.isfile(os.path.join(CORA_DIR, "cora.content"))),
    reason="set SAMGC_CORA_DIR to a directory with cora.content and cora.cites",
)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def path_graph():
    return Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def triangle():
    return Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def small_graph(rng):
    return random_graph(10, 0.3, rng)


@pytest.fixture(scope="session")
def cora():
    if not CORA_DIR:
        pytest.skip("SAMGC_CORA_DIR not set")
    return load_cora_dir(CORA_DIR)


def two_cluster_dataset(per_class=10, dims=4, seed=0, p_in=0.5):
    """Two classes, each a dense random cluster with separable features."""
    rng = np.random.default_rng(seed)
    n = 2 * per_class
    labels = np.repeat([0, 1], per_class)
    features = rng.normal(0.0, 0.1, size=(n, dims))
    features[labels == 0, 0] += 1.0
    features[labels == 1, 1] += 1.0
    edges = [
        (u, v)
        for u in range(n)
        for v in range(u + 1, n)
        if labels[u] == labels[v] and rng.random() < p_in
    ]
    return CitationDataset(
        features=Tensor(features),
        labels=labels,
        graph=Graph.from_edges(n, edges),
        id_map={str(i): i for i in range(n)},
        class_names=("a", "b"),
    )


def write_cora_files(directory, per_class=10, dims=6, seed=0):
    """A Cora-format pair of files with two of the seven classes present."""
    rng = np.random.default_rng(seed)
    names = (CORA_CLASSES[2], CORA_CLASSES[6])
    lines, cites = [], []
    n = 2 * per_class
    for i in range(n):
        label = i // per_class
        bits = (rng.random(dims) < 0.3).astype(int)
        bits[label] = 1
        fields = [f"p{i}"] + [str(b) for b in bits] + [names[label]]
        lines.append("\t".join(fields))
    for i in range(n):
        j = (i + 1) % per_class + (i // per_class) * per_class
        cites.append(f"p{i}\tp{j}")
    content = os.path.join(directory, "cora.content")
    with open(content, "w") as f:
        f.write("\n".join(lines) + "\n")
    with open(os.path.join(directory, "cora.cites"), "w") as f:
        f.write("\n".join(cites) + "\n")
    return str(directory)
