"""Synthetic depth camera: nearest-hit ray casting against a triangle mesh.

Each pixel's value is the Euclidean range (m) to the closest intersection of
its viewing ray with the mesh, +inf when nothing is hit within max_range.
The per-(ray, triangle) test is the parametric Moller-Trumbore form with a
1e-9 determinant epsilon; triangles are iterated with a conservative
screen-space bounding-box cull, which skips only rays that provably miss, so
the result equals the all-pairs nearest-positive-hit scan.
"""

from __future__ import annotations

import numpy as np

from .geometry import CameraIntrinsics, DepthFrame, Pose
from .mesh import TriangleMesh

DET_EPS = 1e-9       # Moller-Trumbore determinant cutoff
BARY_EPS = 1e-10     # inclusive edge margin so shared edges are hit from both sides
T_MIN = 1e-9         # reject hits at/behind the camera origin


def render_depth(
    mesh: TriangleMesh,
    pose: Pose,
    intrinsics: CameraIntrinsics,
    noise_sigma: float = 0.0,
    noise_seed: int = 0,
) -> DepthFrame:
    """Render a range image from `pose`.  Deterministic for fixed inputs.

    `noise_sigma` > 0 adds Gaussian range noise (m) to hit pixels; the default
    0 keeps rendering exact.
    """
    h, w = intrinsics.height, intrinsics.width
    depth = np.full((h, w), np.inf)

    verts_cam = pose.world_to_camera(mesh.vertices)
    tris = mesh.triangles
    if len(tris) == 0:
        return DepthFrame(depths=depth, pose=pose, intrinsics=intrinsics)

    cols = np.arange(w, dtype=float)
    rows = np.arange(h, dtype=float)
    # Unnormalized pixel ray directions d = ((u-cx)/fx, (v-cy)/fy, 1); the
    # parametric hit t then satisfies range = t * |d|.
    dir_x = (cols - intrinsics.cx) / intrinsics.fx
    dir_y = (rows - intrinsics.cy) / intrinsics.fy
    dir_norm = np.sqrt(dir_x[None, :] ** 2 + dir_y[:, None] ** 2 + 1.0)

    tri_cam = verts_cam[tris]          # (F, 3, 3)
    z = tri_cam[:, :, 2]
    front = z > T_MIN                  # per-vertex "in front of camera"
    any_front = front.any(axis=1)
    all_front = front.all(axis=1)

    for f in np.nonzero(any_front)[0]:
        v0, v1, v2 = tri_cam[f]
        if all_front[f]:
            u = intrinsics.fx * tri_cam[f, :, 0] / tri_cam[f, :, 2] + intrinsics.cx
            v = intrinsics.fy * tri_cam[f, :, 1] / tri_cam[f, :, 2] + intrinsics.cy
            c0 = max(int(np.floor(u.min())), 0)
            c1 = min(int(np.ceil(u.max())) + 1, w)
            r0 = max(int(np.floor(v.min())), 0)
            r1 = min(int(np.ceil(v.max())) + 1, h)
            if c0 >= c1 or r0 >= r1:
                continue
        else:
            # Triangle straddles the principal plane: projection bbox is
            # unbounded, fall back to the full image.
            c0, c1, r0, r1 = 0, w, 0, h

        dx = dir_x[c0:c1][None, :]
        dy = dir_y[r0:r1][:, None]

        e1 = v1 - v0
        e2 = v2 - v0
        # pvec = cross(d, e2) with d = (dx, dy, 1)
        px = dy * e2[2] - e2[1]
        py = e2[0] - dx * e2[2]
        pz = dx * e2[1] - dy * e2[0]
        det = e1[0] * px + e1[1] * py + e1[2] * pz
        inv_det = np.where(np.abs(det) > DET_EPS, 1.0 / np.where(det == 0, 1.0, det), np.nan)

        tx, ty, tz = -v0[0], -v0[1], -v0[2]  # tvec = origin - v0, origin = 0
        bu = (tx * px + ty * py + tz * pz) * inv_det
        # qvec = cross(tvec, e1)
        qx = ty * e1[2] - tz * e1[1]
        qy = tz * e1[0] - tx * e1[2]
        qz = tx * e1[1] - ty * e1[0]
        bv = (dx * qx + dy * qy + qz) * inv_det
        t = (e2[0] * qx + e2[1] * qy + e2[2] * qz) * inv_det

        hit = (
            (bu >= -BARY_EPS)
            & (bv >= -BARY_EPS)
            & (bu + bv <= 1.0 + BARY_EPS)
            & (t > T_MIN)
        )
        rng = np.where(hit, t, np.inf) * dir_norm[r0:r1, c0:c1]
        block = depth[r0:r1, c0:c1]
        np.minimum(block, rng, out=block)

    depth[depth > intrinsics.max_range] = np.inf
    if noise_sigma > 0.0:
        rng_gen = np.random.default_rng(noise_seed)
        noise = rng_gen.normal(0.0, noise_sigma, size=depth.shape)
        finite = np.isfinite(depth)
        depth[finite] = np.clip(depth[finite] + noise[finite], T_MIN, intrinsics.max_range)
    return DepthFrame(depths=depth, pose=pose, intrinsics=intrinsics)


def frame_to_points(frame: DepthFrame) -> np.ndarray:
    """World-space point per finite-depth pixel (N, 3)."""
    rows, cols = np.nonzero(frame.hit_mask)
    if len(rows) == 0:
        return np.empty((0, 3))
    dirs = frame.intrinsics.pixel_rays(rows, cols)
    pts_cam = dirs * frame.depths[rows, cols][:, None]
    return frame.pose.camera_to_world(pts_cam)


def project_points(
    points: np.ndarray, pose: Pose, intrinsics: CameraIntrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """Project world points; returns (u, v) pixel coords (N, 2) and range (N,)."""
    cam = pose.world_to_camera(points)
    z = cam[:, 2]
    u = intrinsics.fx * cam[:, 0] / z + intrinsics.cx
    v = intrinsics.fy * cam[:, 1] / z + intrinsics.cy
    return np.column_stack([u, v]), np.linalg.norm(cam, axis=1)
