from datasets.clouds import SHAPES, SyntheticCloudSet, gen_synthetic_clouds
from datasets.cora import CORA_CLASSES, CitationDataset, load_cora
from datasets.splits import Split, make_split

__all__ = [
    "CORA_CLASSES",
    "CitationDataset",
    "SHAPES",
    "Split",
    "SyntheticCloudSet",
    "gen_synthetic_clouds",
    "load_cora",
    "make_split",
]
