"""Stratified train/val/test splits over node indices."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from samgc.errors import ConfigurationError, DataError

logger = logging.getLogger(__name__)

SPLIT_MODES = ("standard", "random")


@dataclass(frozen=True, eq=False)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)

    def __repr__(self) -> str:
        return "Split(train={}, val={}, test={})".format(*self.sizes())


def _labels_of(dataset) -> tuple[np.ndarray, int]:
    labels = np.asarray(getattr(dataset, "labels", dataset), dtype=np.int64)
    num_classes = getattr(dataset, "num_classes", None) or int(labels.max()) + 1
    return labels, num_classes


def _frozen(indices) -> np.ndarray:
    array = np.sort(np.asarray(indices, dtype=np.int64))
    array.flags.writeable = False
    return array


def make_split(
    dataset,
    mode: str = "standard",
    seed: int = 0,
    *,
    per_class: int = 20,
    num_val: int = 500,
    num_test: int = 1000,
    train_frac: float = 0.6,
    val_frac: float = 0.2,
) -> Split:
    """Split node indices; ``dataset`` is a CitationDataset or a label array.

    standard: ``per_class`` training nodes per class, then ``num_val`` and
    ``num_test`` drawn from the remainder.
    random: every class is cut by ``train_frac`` / ``val_frac``, the rest is test.
    """
    labels, num_classes = _labels_of(dataset)
    rng = np.random.default_rng(seed)
    if mode == "standard":
        return _standard_split(labels, num_classes, rng, per_class, num_val, num_test)
    if mode == "random":
        return _random_split(labels, num_classes, rng, train_frac, val_frac)
    raise ConfigurationError(f"unknown split mode {mode!r}; expected one of {SPLIT_MODES}")


def _standard_split(labels, num_classes, rng, per_class, num_val, num_test) -> Split:
    train = []
    for c in range(num_classes):
        members = np.flatnonzero(labels == c)
        if len(members) < per_class:
            raise DataError(
                f"class {c} has {len(members)} nodes, {per_class} requested for training"
            )
        train.append(rng.choice(members, size=per_class, replace=False))
    train = np.concatenate(train)
    rest = rng.permutation(np.setdiff1d(np.arange(len(labels)), train))
    if len(rest) < num_val + num_test:
        raise DataError(
            f"{len(rest)} nodes remain after training, need {num_val + num_test}"
        )
    split = Split(
        _frozen(train),
        _frozen(rest[:num_val]),
        _frozen(rest[num_val : num_val + num_test]),
    )
    logger.debug("standard split %r", split)
    return split


def _random_split(labels, num_classes, rng, train_frac, val_frac) -> Split:
    if not (0.0 < train_frac and 0.0 <= val_frac and train_frac + val_frac < 1.0):
        raise ConfigurationError(
            f"fractions must satisfy 0 < train, 0 <= val, train + val < 1; "
            f"got {train_frac}, {val_frac}"
        )
    train, val, test = [], [], []
    for c in range(num_classes):
        members = rng.permutation(np.flatnonzero(labels == c))
        if len(members) == 0:
            continue
        n_train = max(1, int(round(train_frac * len(members))))
        n_val = int(round(val_frac * len(members)))
        if n_train + n_val > len(members):
            raise DataError(f"class {c} has too few nodes ({len(members)}) to split")
        train.append(members[:n_train])
        val.append(members[n_train : n_train + n_val])
        test.append(members[n_train + n_val :])
    split = Split(
        _frozen(np.concatenate(train)),
        _frozen(np.concatenate(val)),
        _frozen(np.concatenate(test)),
    )
    logger.debug("random split %r", split)
    return split
