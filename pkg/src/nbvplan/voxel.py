"""Classified voxel map with ray-based updates and an adaptive bounding box.

Voxel states: None (untouched), Empty (observed free), Occupied (surface
evidence), Unknown (occluded), Frontier (Unknown with both Empty and Occupied
in its 26-neighborhood).  Update rules per observation:

  1. the voxel containing a measured point becomes Occupied;
  2. None voxels pierced behind the first Occupied voxel on a sensor-to-point
     ray become Unknown, but only inside the current bounding box;
  3. voxels pierced before the first Occupied voxel become Empty.

Occupied is never demoted.  Unknown/Frontier voxels may later be observed
directly and flip to Empty or Occupied; without that the frontier could
never shrink.  Rule 2 is inert until the bounding box exists, so the first
observation is integrated, the box initialized, and the same observation
integrated once more (integration is idempotent).

Storage is a dense state array indexed x + y*nx + z*nx*ny; the grid grows by
copy when the bounding box outruns its span.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class VoxelState(IntEnum):
    NONE = 0
    EMPTY = 1
    OCCUPIED = 2
    UNKNOWN = 3
    FRONTIER = 4


_NEIGHBOR_OFFSETS = np.array(
    [
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) != (0, 0, 0)
    ],
    dtype=np.int64,
)  # 26-connectivity


@dataclass
class Observation:
    """One sensor frame: world-space points plus the sensor origin."""

    points: np.ndarray        # (N, 3) m
    sensor_origin: np.ndarray  # (3,) m

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.sensor_origin = np.asarray(self.sensor_origin, dtype=float).reshape(3)

    def validate_range(self, max_range: float) -> None:
        if len(self.points):
            d = np.linalg.norm(self.points - self.sensor_origin, axis=1)
            if d.max() > max_range + 1e-9:
                raise ValueError("observation contains points beyond max_range")


def preprocess_points(
    points: np.ndarray,
    box_min: np.ndarray,
    box_max: np.ndarray,
    spacing: float,
    align_origin: np.ndarray,
) -> np.ndarray:
    """Crop to the workspace box, then keep one point per `spacing` cell.

    Cells are aligned to `align_origin` so that dedup never moves a point
    across a voxel boundary when spacing divides the voxel size.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    inside = np.all((points >= box_min) & (points <= box_max), axis=1)
    pts = points[inside]
    if len(pts) == 0:
        return pts
    cells = np.floor((pts - align_origin) / spacing).astype(np.int64)
    _, first = np.unique(cells, axis=0, return_index=True)
    return pts[np.sort(first)]


class VoxelGrid:
    """Dense axis-aligned grid of classified voxels."""

    def __init__(
        self,
        origin: np.ndarray,
        resolution: float,
        dims: tuple[int, int, int],
        bbox: tuple[np.ndarray, np.ndarray] | None = None,
    ):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.origin = np.asarray(origin, dtype=float).reshape(3)
        self.resolution = float(resolution)
        self.dims = np.asarray(dims, dtype=np.int64).reshape(3)
        if np.any(self.dims <= 0):
            raise ValueError("grid dims must be positive")
        self.states = np.zeros(int(np.prod(self.dims)), dtype=np.uint8)
        self.bbox = None
        if bbox is not None:
            self.set_bbox(bbox[0], bbox[1])

    @classmethod
    def from_box(cls, box_min, box_max, resolution: float) -> "VoxelGrid":
        box_min = np.asarray(box_min, dtype=float)
        box_max = np.asarray(box_max, dtype=float)
        dims = np.maximum(np.ceil((box_max - box_min) / resolution - 1e-9), 1).astype(np.int64)
        return cls(origin=box_min, resolution=resolution, dims=tuple(dims))

    # ---- geometry helpers -------------------------------------------------

    @property
    def span(self) -> tuple[np.ndarray, np.ndarray]:
        return self.origin.copy(), self.origin + self.dims * self.resolution

    @property
    def n_voxels(self) -> int:
        return int(np.prod(self.dims))

    def voxel_of(self, points: np.ndarray) -> np.ndarray:
        """Integer voxel coordinates (N, 3) of each point (not bounds-checked)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.floor((p - self.origin) / self.resolution).astype(np.int64)

    def in_bounds(self, ijk: np.ndarray) -> np.ndarray:
        ijk = np.atleast_2d(ijk)
        return np.all((ijk >= 0) & (ijk < self.dims), axis=1)

    def flat_index(self, ijk: np.ndarray) -> np.ndarray:
        ijk = np.atleast_2d(ijk)
        nx, ny = int(self.dims[0]), int(self.dims[1])
        return ijk[:, 0] + nx * (ijk[:, 1] + ny * ijk[:, 2])

    def unflat(self, flat: np.ndarray) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        nx, ny = int(self.dims[0]), int(self.dims[1])
        x = flat % nx
        y = (flat // nx) % ny
        z = flat // (nx * ny)
        return np.column_stack([x, y, z])

    def voxel_centers(self, ijk: np.ndarray) -> np.ndarray:
        return self.origin + (np.atleast_2d(ijk) + 0.5) * self.resolution

    def grid3d(self) -> np.ndarray:
        """State array as a (nz, ny, nx) view consistent with flat_index."""
        nx, ny, nz = (int(v) for v in self.dims)
        return self.states.reshape(nz, ny, nx)

    def set_bbox(self, bmin, bmax) -> None:
        bmin = np.asarray(bmin, dtype=float).reshape(3)
        bmax = np.asarray(bmax, dtype=float).reshape(3)
        if np.any(bmax < bmin):
            raise ValueError("invalid bbox")
        self.ensure_contains(bmin, bmax)
        self.bbox = (bmin, bmax)

    def ensure_contains(self, bmin, bmax) -> None:
        """Grow the grid by whole voxels (copy) so [bmin, bmax] fits its span."""
        lo, hi = self.span
        grow_lo = np.maximum(np.ceil((lo - bmin) / self.resolution), 0).astype(np.int64)
        grow_hi = np.maximum(np.ceil((bmax - hi) / self.resolution), 0).astype(np.int64)
        if not (grow_lo.any() or grow_hi.any()):
            return
        new_dims = self.dims + grow_lo + grow_hi
        new_origin = self.origin - grow_lo * self.resolution
        new_states = np.zeros(int(np.prod(new_dims)), dtype=np.uint8)
        nx, ny, nz = (int(v) for v in self.dims)
        mx, my, mz = (int(v) for v in new_dims)
        ox, oy, oz = (int(v) for v in grow_lo)
        new3 = new_states.reshape(mz, my, mx)
        new3[oz : oz + nz, oy : oy + ny, ox : ox + nx] = self.grid3d()
        self.origin = new_origin
        self.dims = new_dims
        self.states = new_states

    # ---- queries ----------------------------------------------------------

    def indices_in_state(self, state: VoxelState) -> np.ndarray:
        """Flat indices of all voxels currently in `state`."""
        return np.nonzero(self.states == int(state))[0]

    def bbox_mask(self) -> np.ndarray:
        """Flat boolean mask of voxels whose center lies inside the bbox."""
        if self.bbox is None:
            return np.ones(self.n_voxels, dtype=bool)
        bmin, bmax = self.bbox
        nx, ny, nz = (int(v) for v in self.dims)
        cx = self.origin[0] + (np.arange(nx) + 0.5) * self.resolution
        cy = self.origin[1] + (np.arange(ny) + 0.5) * self.resolution
        cz = self.origin[2] + (np.arange(nz) + 0.5) * self.resolution
        mx = (cx >= bmin[0]) & (cx <= bmax[0])
        my = (cy >= bmin[1]) & (cy <= bmax[1])
        mz = (cz >= bmin[2]) & (cz <= bmax[2])
        m3 = mz[:, None, None] & my[None, :, None] & mx[None, None, :]
        return m3.reshape(-1)

    def state_counts(self, within_bbox: bool = True) -> dict[str, int]:
        mask = self.bbox_mask() if within_bbox else np.ones(self.n_voxels, dtype=bool)
        sel = self.states[mask]
        return {s.name.lower(): int(np.count_nonzero(sel == int(s))) for s in VoxelState}

    def dump_ply(self, path: str) -> None:
        from .mesh import save_ply_points

        flat = np.nonzero(self.states != int(VoxelState.NONE))[0]
        centers = self.voxel_centers(self.unflat(flat))
        save_ply_points(path, centers, states=self.states[flat])


# ---- ray traversal --------------------------------------------------------


def _clip_segment(grid: VoxelGrid, start: np.ndarray, delta: np.ndarray) -> tuple[float, float]:
    """Slab-clip the param range of start + t*delta against the grid span.

    Returns (t0, t1) with t0 > t1 when the segment misses the grid entirely.
    """
    lo, hi = grid.span
    t0, t1 = 0.0, 1.0
    for axis in range(3):
        d = delta[axis]
        s = start[axis]
        if d == 0.0:
            if s < lo[axis] or s > hi[axis]:
                return 1.0, 0.0
        else:
            ta = (lo[axis] - s) / d
            tb = (hi[axis] - s) / d
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
    return t0, t1


def traverse_ray(grid: VoxelGrid, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    """Voxels pierced by the segment, ordered by entry distance (Amanatides-Woo).

    Returns an (N, 3) integer array, clipped to the grid; empty when the
    segment misses the grid.
    """
    start = np.asarray(start, dtype=float).reshape(3)
    end = np.asarray(end, dtype=float).reshape(3)
    delta = end - start
    if not delta.any():
        raise ValueError("traverse_ray requires start != end")

    t0, t1 = _clip_segment(grid, start, delta)
    if t0 > t1:
        return np.empty((0, 3), dtype=np.int64)

    entry = start + t0 * delta
    ijk = np.clip(
        np.floor((entry - grid.origin) / grid.resolution).astype(np.int64),
        0,
        grid.dims - 1,
    )
    step = np.sign(delta).astype(np.int64)
    tmax = np.full(3, np.inf)
    tdelta = np.full(3, np.inf)
    for axis in range(3):
        if delta[axis] != 0.0:
            boundary = grid.origin[axis] + (ijk[axis] + (step[axis] > 0)) * grid.resolution
            tmax[axis] = (boundary - start[axis]) / delta[axis]
            tdelta[axis] = grid.resolution / abs(delta[axis])

    out = []
    while True:
        out.append(ijk.copy())
        axis = int(np.argmin(tmax))
        if tmax[axis] > t1:
            break
        ijk[axis] += step[axis]
        if ijk[axis] < 0 or ijk[axis] >= grid.dims[axis]:
            break
        tmax[axis] += tdelta[axis]
    return np.array(out, dtype=np.int64)


class _BatchWalk:
    """Vectorized Amanatides-Woo stepping over many segments at once.

    Matches traverse_ray voxel-for-voxel; used by observation integration and
    the ray-casting oracle where per-ray Python loops would dominate runtime.
    """

    def __init__(self, grid: VoxelGrid, starts: np.ndarray, deltas: np.ndarray, t_end: np.ndarray):
        n = len(starts)
        lo, hi = grid.span
        res = grid.resolution

        t0 = np.zeros(n)
        t1 = t_end.astype(float).copy()
        with np.errstate(divide="ignore", invalid="ignore"):
            for axis in range(3):
                d = deltas[:, axis]
                s = starts[:, axis]
                ta = (lo[axis] - s) / d
                tb = (hi[axis] - s) / d
                lo_t = np.minimum(ta, tb)
                hi_t = np.maximum(ta, tb)
                zero = d == 0.0
                inside = (s >= lo[axis]) & (s <= hi[axis])
                lo_t = np.where(zero, np.where(inside, -np.inf, np.inf), lo_t)
                hi_t = np.where(zero, np.where(inside, np.inf, -np.inf), hi_t)
                t0 = np.maximum(t0, lo_t)
                t1 = np.minimum(t1, hi_t)

        self.alive = t0 <= t1
        entry = starts + t0[:, None] * deltas
        self.ijk = np.clip(
            np.floor((entry - grid.origin) / res).astype(np.int64), 0, grid.dims - 1
        )
        self.step = np.sign(deltas).astype(np.int64)
        with np.errstate(divide="ignore", invalid="ignore"):
            boundary = grid.origin + (self.ijk + (self.step > 0)) * res
            self.tmax = np.where(deltas != 0.0, (boundary - starts) / deltas, np.inf)
            self.tdelta = np.where(deltas != 0.0, res / np.abs(deltas), np.inf)
        self.t1 = t1
        self.grid = grid
        self.t_entry = t0.copy()

    def flat(self) -> np.ndarray:
        return self.grid.flat_index(self.ijk)

    def advance(self) -> None:
        """Step every live ray to its next voxel; kills rays leaving grid/segment."""
        axis = np.argmin(self.tmax, axis=1)
        rows = np.arange(len(self.ijk))
        t_cross = self.tmax[rows, axis]
        done = t_cross > self.t1
        self.t_entry = np.where(done, self.t_entry, t_cross)
        self.ijk[rows, axis] += np.where(done, 0, self.step[rows, axis])
        self.tmax[rows, axis] += np.where(done, 0.0, self.tdelta[rows, axis])
        inb = np.all((self.ijk >= 0) & (self.ijk < self.grid.dims), axis=1)
        self.alive &= ~done & inb


# ---- observation integration ---------------------------------------------


def integrate_observation(grid: VoxelGrid, obs: Observation) -> dict[str, int]:
    """Apply update rules 1-3 for one observation; returns state-change counts.

    Rule 2 (occlusion Unknowns) marks only inside the current bounding box
    and is skipped entirely while no box is set.
    """
    if len(obs.points) == 0:
        raise ValueError("integrate_observation requires a nonempty observation")
    counts = {"to_occupied": 0, "to_empty": 0, "to_unknown": 0}
    occ = int(VoxelState.OCCUPIED)

    # Rule 1: point evidence wins from any state.
    ijk = grid.voxel_of(obs.points)
    ok = grid.in_bounds(ijk)
    flat = grid.flat_index(ijk[ok])
    flat = np.unique(flat)
    counts["to_occupied"] = int(np.count_nonzero(grid.states[flat] != occ))
    grid.states[flat] = occ

    targets = obs.points[ok]
    if len(targets) == 0:
        return counts

    # Rays from the sensor through each point, extended to the grid exit so
    # occlusion shadows behind the surface get marked.
    starts = np.broadcast_to(obs.sensor_origin, targets.shape).astype(float)
    deltas = targets - obs.sensor_origin
    lengths = np.linalg.norm(deltas, axis=1)
    keep = lengths > 1e-12
    starts, deltas = starts[keep], deltas[keep]
    walk = _BatchWalk(grid, starts, deltas, t_end=np.full(len(starts), np.inf))

    if grid.bbox is not None:
        bmin, bmax = grid.bbox
    else:
        bmin = bmax = None
    empty = int(VoxelState.EMPTY)
    unknown = int(VoxelState.UNKNOWN)
    none = int(VoxelState.NONE)

    behind = np.zeros(len(starts), dtype=bool)  # past the first Occupied voxel
    while walk.alive.any():
        live = walk.alive
        flat_idx = walk.flat()[live]
        st = grid.states[flat_idx]
        is_occ = st == occ

        phase0 = ~behind[live]
        mark_empty = np.unique(flat_idx[phase0 & ~is_occ])

        if bmin is not None:
            phase1 = behind[live] & (st == none)
            cand = np.unique(flat_idx[phase1])
            if len(cand):
                centers = grid.voxel_centers(grid.unflat(cand))
                inside = np.all((centers >= bmin) & (centers <= bmax), axis=1)
                mark_unknown = cand[inside]
                if len(mark_unknown):
                    counts["to_unknown"] += int(
                        np.count_nonzero(grid.states[mark_unknown] == none)
                    )
                    grid.states[mark_unknown] = unknown

        if len(mark_empty):
            # Empty wins over same-step Unknown marks: written last.
            counts["to_empty"] += int(np.count_nonzero(grid.states[mark_empty] != empty))
            grid.states[mark_empty] = empty

        hit_now = np.zeros(len(starts), dtype=bool)
        hit_now[np.nonzero(live)[0]] = is_occ
        behind |= hit_now
        walk.advance()

    return counts


# ---- frontier and bounding box ---------------------------------------------


def _neighbor_any(mask3: np.ndarray) -> np.ndarray:
    """True where any 26-neighbor of a cell is set in mask3 (zero padded)."""
    nz, ny, nx = mask3.shape
    out = np.zeros_like(mask3)
    for dx, dy, dz in _NEIGHBOR_OFFSETS:
        src_z = slice(max(0, -dz), min(nz, nz - dz))
        src_y = slice(max(0, -dy), min(ny, ny - dy))
        src_x = slice(max(0, -dx), min(nx, nx - dx))
        dst_z = slice(max(0, dz), min(nz, nz + dz))
        dst_y = slice(max(0, dy), min(ny, ny + dy))
        dst_x = slice(max(0, dx), min(nx, nx + dx))
        out[dst_z, dst_y, dst_x] |= mask3[src_z, src_y, src_x]
    return out


def update_frontier(grid: VoxelGrid) -> np.ndarray:
    """Reclassify Unknown/Frontier voxels; returns flat Frontier indices.

    A voxel is Frontier iff it is currently Unknown or Frontier and its
    26-neighborhood contains at least one Empty and one Occupied voxel;
    all others in that pool revert to Unknown.
    """
    g3 = grid.grid3d()
    pool = (g3 == int(VoxelState.UNKNOWN)) | (g3 == int(VoxelState.FRONTIER))
    if not pool.any():
        return np.empty(0, dtype=np.int64)
    near_empty = _neighbor_any(g3 == int(VoxelState.EMPTY))
    near_occ = _neighbor_any(g3 == int(VoxelState.OCCUPIED))
    frontier = pool & near_empty & near_occ
    g3[pool] = int(VoxelState.UNKNOWN)
    g3[frontier] = int(VoxelState.FRONTIER)
    return np.nonzero(frontier.reshape(-1))[0]


def _cells_bbox(grid: VoxelGrid, flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ijk = grid.unflat(flat)
    bmin = grid.origin + ijk.min(axis=0) * grid.resolution
    bmax = grid.origin + (ijk.max(axis=0) + 1) * grid.resolution
    return bmin, bmax


def update_bbox(
    grid: VoxelGrid,
    view_direction: np.ndarray,
    first_frame: bool,
    gamma: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Recompute the adaptive bounding box B and store it on the grid.

    First frame: B is the Occupied-cell bbox swept along the viewing
    direction until its diagonal doubles (growth entirely on the far side).
    Later frames: B covers Occupied cells, Unknown cells, and a sphere of
    radius `gamma` around every Frontier voxel center.
    """
    occ_flat = grid.indices_in_state(VoxelState.OCCUPIED)
    if len(occ_flat) == 0:
        raise ValueError("update_bbox requires at least one Occupied voxel")
    bmin, bmax = _cells_bbox(grid, occ_flat)

    if first_frame:
        d = np.asarray(view_direction, dtype=float).reshape(3)
        norm = np.linalg.norm(d)
        if norm == 0:
            raise ValueError("view_direction must be nonzero")
        d = d / norm
        ext = bmax - bmin
        e2 = float(ext @ ext)
        a = np.abs(d)
        b = float(ext @ a)
        # Sweep length s with |ext + s*|d|| = 2|ext|  (a is unit).
        s = -b + np.sqrt(b * b + 3.0 * e2)
        bmin = bmin + np.minimum(0.0, s * d)
        bmax = bmax + np.maximum(0.0, s * d)
    else:
        unk_flat = grid.indices_in_state(VoxelState.UNKNOWN)
        if len(unk_flat):
            umin, umax = _cells_bbox(grid, unk_flat)
            bmin = np.minimum(bmin, umin)
            bmax = np.maximum(bmax, umax)
        frontier_flat = grid.indices_in_state(VoxelState.FRONTIER)
        if len(frontier_flat):
            centers = grid.voxel_centers(grid.unflat(frontier_flat))
            bmin = np.minimum(bmin, centers.min(axis=0) - gamma)
            bmax = np.maximum(bmax, centers.max(axis=0) + gamma)

    grid.set_bbox(bmin, bmax)
    return bmin, bmax
