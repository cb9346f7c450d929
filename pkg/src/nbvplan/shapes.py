"""Procedural desk-scale test meshes.

All generators return watertight triangle meshes centered at the origin with
every face on the outer surface, so full point-cloud coverage is attainable.
The L- and U-prisms are deliberately non-convex (strong self-occlusion).
"""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh


def make_sphere(radius: float = 0.15, rings: int = 24, segments: int = 48) -> TriangleMesh:
    """UV sphere with pole fans."""
    verts = [np.array([0.0, 0.0, radius]), np.array([0.0, 0.0, -radius])]
    ring_start = []
    for i in range(1, rings):
        polar = np.pi * i / rings
        ring_start.append(len(verts))
        for j in range(segments):
            az = 2.0 * np.pi * j / segments
            verts.append(
                radius
                * np.array([np.sin(polar) * np.cos(az), np.sin(polar) * np.sin(az), np.cos(polar)])
            )
    tris = []
    top = ring_start[0]
    for j in range(segments):
        tris.append([0, top + j, top + (j + 1) % segments])
    for i in range(len(ring_start) - 1):
        a = ring_start[i]
        b = ring_start[i + 1]
        for j in range(segments):
            j2 = (j + 1) % segments
            tris.append([a + j, b + j, b + j2])
            tris.append([a + j, b + j2, a + j2])
    bottom = ring_start[-1]
    for j in range(segments):
        tris.append([1, bottom + (j + 1) % segments, bottom + j])
    return TriangleMesh(vertices=np.array(verts), triangles=np.array(tris))


def make_cube(size: float = 0.24) -> TriangleMesh:
    h = size / 2.0
    verts = np.array(
        [
            [-h, -h, -h], [h, -h, -h], [h, h, -h], [-h, h, -h],
            [-h, -h, h], [h, -h, h], [h, h, h], [-h, h, h],
        ]
    )
    quads = [
        [0, 3, 2, 1],  # bottom (-z)
        [4, 5, 6, 7],  # top (+z)
        [0, 1, 5, 4],  # -y
        [2, 3, 7, 6],  # +y
        [1, 2, 6, 5],  # +x
        [3, 0, 4, 7],  # -x
    ]
    tris = []
    for q in quads:
        tris.append([q[0], q[1], q[2]])
        tris.append([q[0], q[2], q[3]])
    return TriangleMesh(vertices=verts, triangles=np.array(tris))


def make_torus(
    major_radius: float = 0.10,
    minor_radius: float = 0.04,
    n_major: int = 48,
    n_minor: int = 24,
) -> TriangleMesh:
    verts = []
    for i in range(n_major):
        u = 2.0 * np.pi * i / n_major
        cu, su = np.cos(u), np.sin(u)
        for j in range(n_minor):
            v = 2.0 * np.pi * j / n_minor
            w = major_radius + minor_radius * np.cos(v)
            verts.append([w * cu, w * su, minor_radius * np.sin(v)])
    tris = []
    for i in range(n_major):
        i2 = (i + 1) % n_major
        for j in range(n_minor):
            j2 = (j + 1) % n_minor
            a = i * n_minor + j
            b = i2 * n_minor + j
            c = i2 * n_minor + j2
            d = i * n_minor + j2
            tris.append([a, b, c])
            tris.append([a, c, d])
    return TriangleMesh(vertices=np.array(verts), triangles=np.array(tris))


def _cell_prism(cells: set[tuple[int, int]], cell: float, depth: float) -> TriangleMesh:
    """Extrude a union of unit grid cells along z into a conforming solid.

    Caps are two triangles per cell, side walls one quad per boundary cell
    edge, so every mesh edge is shared by exactly two triangles.
    """
    verts: list[tuple[float, float, float]] = []
    index: dict[tuple[float, float, float], int] = {}
    tris: list[list[int]] = []
    z0, z1 = -depth / 2.0, depth / 2.0

    def vid(x, y, z):
        key = (round(x, 9), round(y, 9), round(z, 9))
        if key not in index:
            index[key] = len(verts)
            verts.append(key)
        return index[key]

    def quad(p0, p1, p2, p3):
        i0, i1, i2, i3 = vid(*p0), vid(*p1), vid(*p2), vid(*p3)
        tris.append([i0, i1, i2])
        tris.append([i0, i2, i3])

    for (i, j) in cells:
        x0, y0 = i * cell, j * cell
        x1, y1 = x0 + cell, y0 + cell
        quad((x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1))  # top
        quad((x0, y0, z0), (x0, y1, z0), (x1, y1, z0), (x1, y0, z0))  # bottom
        if (i, j - 1) not in cells:
            quad((x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1))
        if (i, j + 1) not in cells:
            quad((x1, y1, z0), (x0, y1, z0), (x0, y1, z1), (x1, y1, z1))
        if (i - 1, j) not in cells:
            quad((x0, y1, z0), (x0, y0, z0), (x0, y0, z1), (x0, y1, z1))
        if (i + 1, j) not in cells:
            quad((x1, y0, z0), (x1, y1, z0), (x1, y1, z1), (x1, y0, z1))

    mesh = TriangleMesh(vertices=np.array(verts, dtype=float), triangles=np.array(tris))
    center = (mesh.vertices.min(axis=0) + mesh.vertices.max(axis=0)) / 2.0
    mesh.vertices = mesh.vertices - center
    return mesh


def make_l_prism(cell: float = 0.15, depth: float = 0.12) -> TriangleMesh:
    """L-shaped block: a 2x2 cell square with one quadrant removed, extruded."""
    return _cell_prism({(0, 0), (1, 0), (0, 1)}, cell, depth)


def make_u_prism(cell: float = 0.10, depth: float = 0.16) -> TriangleMesh:
    """U-channel block: a 3x2 cell box with the top-middle cell removed."""
    return _cell_prism({(0, 0), (1, 0), (2, 0), (0, 1), (2, 1)}, cell, depth)


BUILTIN_SHAPES = {
    "sphere": make_sphere,
    "cube": make_cube,
    "torus": make_torus,
    "l_prism": make_l_prism,
    "u_prism": make_u_prism,
}


def make_shape(name: str) -> TriangleMesh:
    try:
        return BUILTIN_SHAPES[name]()
    except KeyError:
        raise ValueError(f"unknown shape {name!r}; available: {sorted(BUILTIN_SHAPES)}")
