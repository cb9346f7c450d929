"""Ray-casting viewpoint evaluation: the correctness oracle and speed baseline.

A candidate is scored by casting one ray per stride-th pixel through the
voxel grid and counting the unique Frontier and Occupied voxels some ray
reaches before being blocked.  The first Occupied voxel on a ray is itself
visible and terminates the ray; Frontier voxels do not block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, Pose
from .views import CandidateView
from .voxel import VoxelGrid, VoxelState, _BatchWalk


@dataclass
class OracleScore:
    visible_frontier: int
    visible_occupied: int
    rays_cast: int


def _pixel_ray_dirs(intrinsics: CameraIntrinsics, pose: Pose, stride: int) -> np.ndarray:
    rows = np.arange(0, intrinsics.height, stride, dtype=float)
    cols = np.arange(0, intrinsics.width, stride, dtype=float)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    dirs_cam = intrinsics.pixel_rays(rr.ravel(), cc.ravel())
    return dirs_cam @ pose.rotation.T


def oracle_evaluate(
    view: CandidateView,
    grid: VoxelGrid,
    intrinsics: CameraIntrinsics,
    stride: int = 4,
) -> OracleScore:
    """Count Frontier/Occupied voxels visible from the view through pixel rays."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    dirs = _pixel_ray_dirs(intrinsics, view.pose, stride)
    origin = view.pose.translation
    n_rays = len(dirs)
    # Segments of length max_range; the batch walker clips them to the grid.
    starts = np.broadcast_to(origin, dirs.shape).astype(float)
    deltas = dirs * intrinsics.max_range

    walk = _BatchWalk(grid, starts, deltas, t_end=np.ones(n_rays))
    occ = int(VoxelState.OCCUPIED)
    frontier = int(VoxelState.FRONTIER)
    seen_frontier = np.zeros(grid.n_voxels, dtype=bool)
    seen_occupied = np.zeros(grid.n_voxels, dtype=bool)

    while walk.alive.any():
        live = walk.alive
        flat = walk.flat()[live]
        st = grid.states[flat]
        seen_frontier[flat[st == frontier]] = True
        hit = st == occ
        seen_occupied[flat[hit]] = True
        # blocked rays stop here
        dead = np.zeros(len(starts), dtype=bool)
        dead[np.nonzero(live)[0]] = hit
        walk.alive &= ~dead
        walk.advance()

    return OracleScore(
        visible_frontier=int(seen_frontier.sum()),
        visible_occupied=int(seen_occupied.sum()),
        rays_cast=n_rays,
    )


def oracle_rank(
    candidates: list[CandidateView],
    grid: VoxelGrid,
    intrinsics: CameraIntrinsics,
    stride: int = 4,
) -> list[tuple[CandidateView, OracleScore]]:
    """Candidates ordered by visible_frontier, descending and stable."""
    if not candidates:
        raise ValueError("oracle_rank requires candidates")
    scored = [(v, oracle_evaluate(v, grid, intrinsics, stride)) for v in candidates]
    order = sorted(
        range(len(scored)), key=lambda i: (-scored[i][1].visible_frontier, i)
    )
    return [scored[i] for i in order]
