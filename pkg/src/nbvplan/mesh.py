"""Triangle mesh I/O and sampling.

Supported inputs are ASCII OBJ (v/f records, polygons fan-triangulated) and
ASCII PLY with vertex/face elements.  Units are assumed to be meters.
Zero-area faces are dropped at load time.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

DEGENERATE_AREA_EPS = 1e-14  # squared-meter scale, doubled-area squared below this is dropped


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed; carries file line context."""

    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class EmptyMeshError(ValueError):
    """Raised when a parsed mesh contains no usable triangles."""


@dataclass
class TriangleMesh:
    vertices: np.ndarray   # (V, 3) float, meters
    triangles: np.ndarray  # (F, 3) int, indices into vertices

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and self.triangles.max() >= len(self.vertices):
            raise ValueError("triangle index out of range")
        if self.triangles.size and self.triangles.min() < 0:
            raise ValueError("negative triangle index")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_corners(self) -> np.ndarray:
        """Corner positions per face, shape (F, 3, 3)."""
        return self.vertices[self.triangles]

    def triangle_areas(self) -> np.ndarray:
        tris = self.triangle_corners()
        cross = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def _drop_degenerate(vertices: np.ndarray, triangles: list[list[int]]) -> TriangleMesh:
    tri = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    corners = vertices[tri]
    cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    keep = np.einsum("ij,ij->i", cross, cross) > DEGENERATE_AREA_EPS
    return TriangleMesh(vertices=vertices, triangles=tri[keep])


def _fan_triangulate(indices: list[int]) -> list[list[int]]:
    return [[indices[0], indices[i], indices[i + 1]] for i in range(1, len(indices) - 1)]


def _load_obj(path: str) -> TriangleMesh:
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshFormatError(path, line_no, "vertex record needs 3 coordinates")
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as exc:
                    raise MeshFormatError(path, line_no, f"bad vertex coordinate: {exc}")
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshFormatError(path, line_no, "face record needs >= 3 vertices")
                idx = []
                for token in parts[1:]:
                    head = token.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise MeshFormatError(path, line_no, f"bad face index {token!r}")
                    # OBJ indices are 1-based; negatives count from the end.
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                faces.extend(_fan_triangulate(idx))
            # other record types (vn, vt, o, g, s, mtllib, usemtl, ...) are ignored
    if not vertices or not faces:
        raise EmptyMeshError(f"{path}: no triangles found")
    verts = np.asarray(vertices, dtype=float)
    if max(max(f) for f in faces) >= len(verts) or min(min(f) for f in faces) < 0:
        raise MeshFormatError(path, 0, "face index out of vertex range")
    return _drop_degenerate(verts, faces)


def _load_ply(path: str) -> TriangleMesh:
    with open(path, "r") as fh:
        lines = fh.read().splitlines()

    if not lines or lines[0].strip() != "ply":
        raise MeshFormatError(path, 1, "missing 'ply' magic")
    n_vertex = n_face = None
    vertex_props: list[str] = []
    current_element = None
    body_start = None
    for line_no, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] != "ascii":
                raise MeshFormatError(path, line_no, "only ascii PLY is supported")
        elif parts[0] == "element":
            if len(parts) != 3:
                raise MeshFormatError(path, line_no, "malformed element record")
            current_element = parts[1]
            if parts[1] == "vertex":
                n_vertex = int(parts[2])
            elif parts[1] == "face":
                n_face = int(parts[2])
        elif parts[0] == "property" and current_element == "vertex":
            vertex_props.append(parts[-1])
        elif parts[0] == "end_header":
            body_start = line_no  # lines[] is 0-based with offset 1 already applied
            break
    if body_start is None:
        raise MeshFormatError(path, len(lines), "no end_header")
    if n_vertex is None or n_face is None:
        raise MeshFormatError(path, body_start, "PLY must declare vertex and face elements")
    try:
        xi, yi, zi = (vertex_props.index(k) for k in ("x", "y", "z"))
    except ValueError:
        raise MeshFormatError(path, body_start, "vertex element lacks x/y/z properties")

    body = lines[body_start:]
    if len(body) < n_vertex + n_face:
        raise MeshFormatError(path, len(lines), "file truncated before declared element counts")
    vertices = np.empty((n_vertex, 3), dtype=float)
    for i in range(n_vertex):
        parts = body[i].split()
        try:
            vertices[i] = (float(parts[xi]), float(parts[yi]), float(parts[zi]))
        except (ValueError, IndexError):
            raise MeshFormatError(path, body_start + i + 1, "bad vertex line")
    faces: list[list[int]] = []
    for i in range(n_face):
        parts = body[n_vertex + i].split()
        try:
            count = int(parts[0])
            idx = [int(tok) for tok in parts[1 : 1 + count]]
        except (ValueError, IndexError):
            raise MeshFormatError(path, body_start + n_vertex + i + 1, "bad face line")
        if len(idx) != count or count < 3:
            raise MeshFormatError(path, body_start + n_vertex + i + 1, "bad face vertex count")
        faces.extend(_fan_triangulate(idx))
    if not faces:
        raise EmptyMeshError(f"{path}: no triangles found")
    verts = np.asarray(vertices, dtype=float)
    if max(max(f) for f in faces) >= len(verts) or min(min(f) for f in faces) < 0:
        raise MeshFormatError(path, 0, "face index out of vertex range")
    return _drop_degenerate(verts, faces)


def load_mesh(path: str) -> TriangleMesh:
    """Load an ASCII OBJ or PLY triangle mesh; polygons are fan-triangulated."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".obj":
        mesh = _load_obj(path)
    elif ext == ".ply":
        mesh = _load_ply(path)
    else:
        raise MeshFormatError(path, 0, f"unsupported mesh extension {ext!r}")
    if mesh.n_triangles == 0:
        raise EmptyMeshError(f"{path}: all faces degenerate")
    return mesh


def save_ply_points(path: str, points: np.ndarray, states: np.ndarray | None = None) -> None:
    """Write a point cloud as ASCII PLY; optional integer `state` per vertex."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(points)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        if states is not None:
            fh.write("property int state\n")
        fh.write("end_header\n")
        if states is None:
            for p in points:
                fh.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f}\n")
        else:
            for p, s in zip(points, np.asarray(states).ravel()):
                fh.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {int(s)}\n")


def save_obj(path: str, mesh: TriangleMesh) -> None:
    """Write a mesh as ASCII OBJ."""
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9f} {v[1]:.9f} {v[2]:.9f}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def sample_surface_points(mesh: TriangleMesh, count: int, seed: int) -> np.ndarray:
    """Area-uniform surface samples: area-weighted face choice + uniform barycentric."""
    rng = np.random.default_rng(seed)
    areas = mesh.triangle_areas()
    probs = areas / areas.sum()
    face_idx = rng.choice(mesh.n_triangles, size=count, p=probs)
    corners = mesh.triangle_corners()[face_idx]
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    w0 = 1.0 - r1
    w1 = r1 * (1.0 - r2)
    w2 = r1 * r2
    return (
        w0[:, None] * corners[:, 0]
        + w1[:, None] * corners[:, 1]
        + w2[:, None] * corners[:, 2]
    )


def point_to_mesh_distance(points: np.ndarray, mesh: TriangleMesh) -> np.ndarray:
    """Exact point-to-triangle distances, minimized over all faces.

    O(N*F); intended for validation on small inputs.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    corners = mesh.triangle_corners()
    best = np.full(len(points), np.inf)
    for a, b, c in corners:
        best = np.minimum(best, _point_triangle_distance(points, a, b, c))
    return best


def _point_triangle_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Distance from each point in p (N,3) to triangle (a,b,c)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ap @ ab
    d2 = ap @ ac
    bp = p - b
    d3 = bp @ ab
    d4 = bp @ ac
    cp = p - c
    d5 = cp @ ab
    d6 = cp @ ac

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    denom = va + vb + vc
    # Clamped barycentric projection onto the triangle, region by region.
    result = np.empty(len(p))
    result.fill(np.nan)

    # vertex regions
    m = (d1 <= 0) & (d2 <= 0)
    result[m] = np.linalg.norm(p[m] - a, axis=1)
    m2 = (d3 >= 0) & (d4 <= d3) & np.isnan(result)
    result[m2] = np.linalg.norm(p[m2] - b, axis=1)
    m3 = (d6 >= 0) & (d5 <= d6) & np.isnan(result)
    result[m3] = np.linalg.norm(p[m3] - c, axis=1)

    # edge regions
    m4 = (vc <= 0) & (d1 >= 0) & (d3 <= 0) & np.isnan(result)
    t = np.where(d1 - d3 != 0, d1 / np.where(m4, d1 - d3, 1.0), 0.0)
    result[m4] = np.linalg.norm(p[m4] - (a + np.outer(t[m4], ab)), axis=1)
    m5 = (vb <= 0) & (d2 >= 0) & (d6 <= 0) & np.isnan(result)
    t = np.where(d2 - d6 != 0, d2 / np.where(m5, d2 - d6, 1.0), 0.0)
    result[m5] = np.linalg.norm(p[m5] - (a + np.outer(t[m5], ac)), axis=1)
    m6 = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0) & np.isnan(result)
    t = np.where((d4 - d3) + (d5 - d6) != 0, (d4 - d3) / np.where(m6, (d4 - d3) + (d5 - d6), 1.0), 0.0)
    result[m6] = np.linalg.norm(p[m6] - (b + np.outer(t[m6], c - b)), axis=1)

    # interior
    mi = np.isnan(result)
    if mi.any():
        v = vb[mi] / denom[mi]
        w = vc[mi] / denom[mi]
        proj = a + np.outer(v, ab) + np.outer(w, ac)
        result[mi] = np.linalg.norm(p[mi] - proj, axis=1)
    return result
