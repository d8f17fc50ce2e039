"""Synthetic shape clouds: a desk-scale stand-in for CAD point-cloud benchmarks."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from samgc.errors import ConfigurationError

logger = logging.getLogger(__name__)

SHAPES = ("sphere", "cube", "plane", "torus")
MIN_POINTS = 16
TORUS_RADII = (1.0, 0.35)


@dataclass(frozen=True, eq=False)
class SyntheticCloudSet:
    clouds: np.ndarray
    labels: np.ndarray
    seed: int
    class_names: tuple[str, ...] = SHAPES

    def __post_init__(self):
        self.clouds.flags.writeable = False
        self.labels.flags.writeable = False

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_pts(self) -> int:
        return self.clouds.shape[1]


def _torus(n: int, rng: np.random.Generator) -> np.ndarray:
    # Rejection on the tube angle keeps the samples uniform in surface area.
    big, small = TORUS_RADII
    accepted = []
    count = 0
    while count < n:
        theta = rng.uniform(0.0, 2 * np.pi, size=2 * n)
        phi = rng.uniform(0.0, 2 * np.pi, size=2 * n)
        keep = rng.uniform(0.0, 1.0, size=2 * n) < (big + small * np.cos(phi)) / (
            big + small
        )
        theta, phi = theta[keep], phi[keep]
        ring = big + small * np.cos(phi)
        accepted.append(
            np.stack([ring * np.cos(theta), ring * np.sin(theta), small * np.sin(phi)], 1)
        )
        count += keep.sum()
    return np.concatenate(accepted)[:n]


def sample_surface(shape: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """n points uniformly on the surface of a canonical, axis-aligned shape.

    sphere: radius 1. cube: side 2 centred at the origin. plane: the square
    [-1, 1]^2 at z = 0. torus: radii (1, 0.35) around the z axis.
    """
    if shape == "sphere":
        points = rng.normal(size=(n, 3))
        return points / np.linalg.norm(points, axis=1, keepdims=True)
    if shape == "cube":
        points = rng.uniform(-1.0, 1.0, size=(n, 3))
        axis = rng.integers(0, 3, size=n)
        points[np.arange(n), axis] = rng.choice([-1.0, 1.0], size=n)
        return points
    if shape == "plane":
        points = np.zeros((n, 3))
        points[:, :2] = rng.uniform(-1.0, 1.0, size=(n, 2))
        return points
    if shape == "torus":
        return _torus(n, rng)
    raise ConfigurationError(f"unknown shape {shape!r}; expected one of {SHAPES}")


def normalize_unit_sphere(points: np.ndarray) -> np.ndarray:
    centred = points - points.mean(axis=0)
    radius = np.linalg.norm(centred, axis=1).max()
    return centred / radius if radius > 0 else centred


def random_rotation(rng: np.random.Generator) -> Rotation:
    # A normalised Gaussian quaternion is uniform over rotations.
    return Rotation.from_quat(rng.normal(size=4))


def gen_synthetic_clouds(
    classes: Sequence[str] = SHAPES,
    per_class: int = 200,
    n_pts: int = 128,
    noise_sigma: float = 0.02,
    seed: int = 0,
) -> SyntheticCloudSet:
    if n_pts < MIN_POINTS:
        raise ConfigurationError(f"clouds need at least {MIN_POINTS} points, got {n_pts}")
    rng = np.random.default_rng(seed)
    clouds = np.empty((len(classes) * per_class, n_pts, 3))
    labels = np.repeat(np.arange(len(classes)), per_class)
    for i, label in enumerate(labels):
        points = sample_surface(classes[label], n_pts, rng)
        if noise_sigma > 0:
            points = points + rng.normal(0.0, noise_sigma, size=points.shape)
        points = random_rotation(rng).apply(points)
        clouds[i] = normalize_unit_sphere(points)
    logger.info(
        "generated %d clouds of %d points over %d shapes (seed %d)",
        len(labels),
        n_pts,
        len(classes),
        seed,
    )
    return SyntheticCloudSet(clouds, labels, seed, tuple(classes))
