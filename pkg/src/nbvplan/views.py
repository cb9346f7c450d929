"""Candidate viewpoint generation on a dynamically sized sampling sphere.

Views live on `alpha` equally spaced parallels of a partial sphere around
the bounding-box center, with per-parallel counts proportional to
circumference (largest-remainder rounding) and all optical axes aimed at the
center.  The sphere radius is the camera working distance plus half the
bounding-box diagonal, so it tracks the box as the scan grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, look_at

# Polar extents measured from the up axis; the hemisphere cap stays clear of
# the pole singularity and of grazing views near the equator.
HEMISPHERE_POLAR_RANGE = (np.deg2rad(15.0), np.deg2rad(85.0))
FULL_SPHERE_POLAR_RANGE = (np.deg2rad(15.0), np.deg2rad(165.0))

_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))  # per-parallel azimuth phase step


@dataclass
class SamplingConfig:
    mode: str = "full_sphere"          # "hemisphere" | "full_sphere"
    alpha: int = 8                     # parallel count
    n_views: int = 800                 # total candidates
    working_distance: float = 0.4      # d_c (m)
    up_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        if self.mode not in ("hemisphere", "full_sphere"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.n_views < self.alpha:
            raise ValueError("need at least one view per parallel")
        self.up_axis = np.asarray(self.up_axis, dtype=float).reshape(3)
        self.up_axis = self.up_axis / np.linalg.norm(self.up_axis)

    @property
    def polar_range(self) -> tuple[float, float]:
        return HEMISPHERE_POLAR_RANGE if self.mode == "hemisphere" else FULL_SPHERE_POLAR_RANGE


@dataclass
class CandidateView:
    pose: Pose
    radius: float            # distance to the bbox center (m)
    polar: float             # rad, from the up axis
    azimuth: float           # rad, in [0, 2*pi)
    partition_index: int = -1
    score: float | None = None

    @property
    def position(self) -> np.ndarray:
        return self.pose.translation


def sampling_radius(bbox: tuple[np.ndarray, np.ndarray], working_distance: float) -> float:
    """R = d_c + half the bbox diagonal."""
    bmin, bmax = (np.asarray(b, dtype=float) for b in bbox)
    return float(working_distance + 0.5 * np.linalg.norm(bmax - bmin))


def _parallel_counts(polars: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder apportionment proportional to parallel circumference."""
    weights = np.sin(polars)
    weights = np.maximum(weights, 1e-12)
    quota = total * weights / weights.sum()
    counts = np.floor(quota).astype(int)
    remainder = total - counts.sum()
    order = np.argsort(-(quota - counts), kind="stable")  # ties -> lower index
    counts[order[:remainder]] += 1
    return counts


def _up_basis(up: np.ndarray) -> np.ndarray:
    """Orthonormal basis (e1, e2, up) with azimuth measured in the e1-e2 plane."""
    ref = np.array([1.0, 0.0, 0.0])
    if abs(up @ ref) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    e1 = ref - (ref @ up) * up
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(up, e1)
    return np.column_stack([e1, e2, up])


def sample_candidates(
    config: SamplingConfig, center: np.ndarray, radius: float
) -> list[CandidateView]:
    """Generate candidate views on the sampling sphere, all looking at `center`."""
    if radius <= 0:
        raise ValueError("sampling radius must be positive")
    center = np.asarray(center, dtype=float).reshape(3)
    lo, hi = config.polar_range
    polars = np.linspace(lo, hi, config.alpha)
    counts = _parallel_counts(polars, config.n_views)
    basis = _up_basis(config.up_axis)

    views: list[CandidateView] = []
    for ring, (polar, count) in enumerate(zip(polars, counts)):
        if count == 0:
            continue
        phase = (ring * _GOLDEN_ANGLE) % (2.0 * np.pi)
        for k in range(count):
            azimuth = (phase + 2.0 * np.pi * k / count) % (2.0 * np.pi)
            local = np.array(
                [
                    np.sin(polar) * np.cos(azimuth),
                    np.sin(polar) * np.sin(azimuth),
                    np.cos(polar),
                ]
            )
            position = center + radius * (basis @ local)
            pose = look_at(position, center, config.up_axis)
            views.append(
                CandidateView(pose=pose, radius=radius, polar=polar, azimuth=azimuth)
            )
    return views


def assign_partitions(views: list[CandidateView], beta: int) -> list[CandidateView]:
    """Bin views into `beta` longitude sectors: floor(azimuth / (2*pi/beta))."""
    if beta < 1:
        raise ValueError("beta must be >= 1")
    width = 2.0 * np.pi / beta
    for v in views:
        v.partition_index = min(int(v.azimuth // width), beta - 1)
    return views
