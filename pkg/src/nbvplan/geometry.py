"""Camera geometry primitives: intrinsics, rigid poses, look-at construction.

Coordinate conventions (OpenCV style): camera +x right, +y down, +z forward.
Pixel (row r, col c) has continuous image coordinates (u, v) = (c, r), so the
principal point (cx, cy) lies exactly on the pixel with those indices when
they are integers.  Poses are camera-to-world transforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera parameters plus the sensor's working envelope."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    working_distance: float = 0.4  # optimal standoff d_c (m)
    max_range: float = 2.0        # depth cutoff (m)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def matrix(self) -> np.ndarray:
        """3x3 intrinsic matrix K."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def pixel_rays(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Unit direction in camera coordinates through each (row, col) pixel."""
        d = np.stack(
            [
                (np.asarray(cols, dtype=float) - self.cx) / self.fx,
                (np.asarray(rows, dtype=float) - self.cy) / self.fy,
                np.ones(np.shape(rows), dtype=float),
            ],
            axis=-1,
        )
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


@dataclass(frozen=True)
class Pose:
    """Rigid camera-to-world transform H = [R | t]."""

    rotation: np.ndarray     # 3x3, orthonormal, det +1
    translation: np.ndarray  # 3-vector (m)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(r.T @ r, np.eye(3), atol=ORTHONORMAL_TOL):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation must have determinant +1")

    @property
    def matrix(self) -> np.ndarray:
        """4x4 homogeneous camera-to-world matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def optical_axis(self) -> np.ndarray:
        """Viewing direction (+z of the camera) in world coordinates."""
        return self.rotation[:, 2].copy()

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        """Map world points (N,3) into camera coordinates."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return (p - self.translation) @ self.rotation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        """Map camera-frame points (N,3) into world coordinates."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return p @ self.rotation.T + self.translation

    def projection_matrix(self, intrinsics: CameraIntrinsics) -> np.ndarray:
        """3x4 camera matrix P = K [R|t] built from the world-to-camera transform."""
        rt = np.empty((3, 4))
        rt[:, :3] = self.rotation.T
        rt[:, 3] = -self.rotation.T @ self.translation
        return intrinsics.matrix @ rt


def look_at(position: np.ndarray, target: np.ndarray, up: np.ndarray) -> Pose:
    """Camera pose at `position` with +z aimed at `target`.

    Roll is pinned so the in-image up direction is the projection of `up`
    onto the image plane; when the view is parallel to `up` the world x axis
    is used instead.
    """
    position = np.asarray(position, dtype=float).reshape(3)
    target = np.asarray(target, dtype=float).reshape(3)
    up = np.asarray(up, dtype=float).reshape(3)

    forward = target - position
    norm = np.linalg.norm(forward)
    if norm == 0.0:
        raise ValueError("camera position coincides with the look-at target")
    z = forward / norm

    up_proj = up - np.dot(up, z) * z
    if np.linalg.norm(up_proj) < 1e-8:
        fallback = np.array([1.0, 0.0, 0.0])
        up_proj = fallback - np.dot(fallback, z) * z
    up_proj /= np.linalg.norm(up_proj)

    y = -up_proj            # camera +y points down in the image
    x = np.cross(y, z)
    rotation = np.column_stack([x, y, z])
    return Pose(rotation=rotation, translation=position)


@dataclass
class DepthFrame:
    """Per-pixel range image (m).  Misses are stored as +inf in memory."""

    depths: np.ndarray  # (height, width), finite values in (0, max_range]
    pose: Pose
    intrinsics: CameraIntrinsics

    hit_mask: np.ndarray = field(init=False)

    def __post_init__(self):
        self.depths = np.asarray(self.depths, dtype=float)
        expected = (self.intrinsics.height, self.intrinsics.width)
        if self.depths.shape != expected:
            raise ValueError(f"depth image shape {self.depths.shape} != {expected}")
        self.hit_mask = np.isfinite(self.depths)

    @property
    def n_hits(self) -> int:
        return int(self.hit_mask.sum())

    def export_depths(self) -> np.ndarray:
        """Depth image with the miss sentinel encoded as 0 (for file artifacts)."""
        out = self.depths.copy()
        out[~self.hit_mask] = 0.0
        return out
