"""Procedural watertight primitives used as counting objects and fixtures."""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh

_ICO_T = (1.0 + 5.0**0.5) / 2.0
_ICO_VERTS = np.array(
    [
        (-1, _ICO_T, 0), (1, _ICO_T, 0), (-1, -_ICO_T, 0), (1, -_ICO_T, 0),
        (0, -1, _ICO_T), (0, 1, _ICO_T), (0, -1, -_ICO_T), (0, 1, -_ICO_T),
        (_ICO_T, 0, -1), (_ICO_T, 0, 1), (-_ICO_T, 0, -1), (-_ICO_T, 0, 1),
    ],
    dtype=np.float64,
)
_ICO_FACES = np.array(
    [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ],
    dtype=np.int64,
)


def box(sx: float = 1.0, sy: float = 1.0, sz: float = 1.0) -> TriMesh:
    """Axis-aligned box centered at the origin, outward-oriented."""
    hx, hy, hz = sx / 2.0, sy / 2.0, sz / 2.0
    v = np.array(
        [
            (-hx, -hy, -hz), (hx, -hy, -hz), (hx, hy, -hz), (-hx, hy, -hz),
            (-hx, -hy, hz), (hx, -hy, hz), (hx, hy, hz), (-hx, hy, hz),
        ]
    )
    f = np.array(
        [
            (0, 2, 1), (0, 3, 2),  # -z
            (4, 5, 6), (4, 6, 7),  # +z
            (0, 1, 5), (0, 5, 4),  # -y
            (2, 3, 7), (2, 7, 6),  # +y
            (1, 2, 6), (1, 6, 5),  # +x
            (3, 0, 4), (3, 4, 7),  # -x
        ],
        dtype=np.int64,
    )
    return TriMesh(v, f)


def icosphere(subdivisions: int = 3, radius: float = 0.5) -> TriMesh:
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = [tuple(f) for f in _ICO_FACES]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriMesh(np.asarray(verts) * radius, np.asarray(faces, dtype=np.int64))


def l_prism(size: float = 1.0, height: float = 1.0, arm: float = 0.5) -> TriMesh:
    """L-shaped prism: a square with the corner block beyond `arm` removed, extruded in z.

    Volume is (1 - (1-arm)^2) x size^2 x height. The convex hull closes the
    notch with a diagonal wedge, so it is smaller than the bounding box.
    """
    if not 0 < arm < 1:
        raise ValueError("arm must be in (0, 1)")
    s = size
    a = arm
    ring2d = np.array(
        [
            (0, 0), (a, 0), (1, 0), (1, a),
            (a, a), (a, 1), (0, 1), (0, a),
        ]
    ) * s
    ring2d -= np.array([0.5, 0.5]) * s  # center in xy
    n = len(ring2d)
    bottom = np.column_stack([ring2d, np.full(n, -height / 2.0)])
    top = np.column_stack([ring2d, np.full(n, height / 2.0)])
    verts = np.vstack([bottom, top])

    quads = [(0, 1, 4, 7), (1, 2, 3, 4), (7, 4, 5, 6)]
    faces = []
    for a, b, c, d in quads:
        faces += [(n + a, n + b, n + c), (n + a, n + c, n + d)]  # top, +z
        faces += [(a, c, b), (a, d, c)]  # bottom, -z
    for i in range(n):
        j = (i + 1) % n
        faces += [(i, j, n + j), (i, n + j, n + i)]  # outward side walls
    return TriMesh(verts, np.asarray(faces, dtype=np.int64))


def torus(major_radius: float = 0.35, minor_radius: float = 0.15,
          n_major: int = 24, n_minor: int = 12) -> TriMesh:
    theta = 2 * np.pi * np.arange(n_major) / n_major
    phi = 2 * np.pi * np.arange(n_minor) / n_minor
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    ring = major_radius + minor_radius * np.cos(pp)
    verts = np.column_stack(
        [
            (ring * np.cos(tt)).ravel(),
            (ring * np.sin(tt)).ravel(),
            (minor_radius * np.sin(pp)).ravel(),
        ]
    )
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = ((i + 1) % n_major) * n_minor + j
            c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            d = i * n_minor + (j + 1) % n_minor
            faces += [(a, b, c), (a, c, d)]
    return TriMesh(verts, np.asarray(faces, dtype=np.int64))


def capsule(radius: float = 0.25, cylinder_height: float = 0.5,
            n_segments: int = 16, n_rings: int = 4) -> TriMesh:
    """Cylinder with hemispherical caps along z."""
    hh = cylinder_height / 2.0
    verts = [np.array([0.0, 0.0, hh + radius])]
    seg = 2 * np.pi * np.arange(n_segments) / n_segments
    cos_s, sin_s = np.cos(seg), np.sin(seg)

    ring_start = []
    for k in range(1, n_rings + 1):  # top hemisphere, pole -> equator
        alpha = (np.pi / 2) * k / n_rings
        rho = radius * np.sin(alpha)
        z = hh + radius * np.cos(alpha)
        ring_start.append(len(verts))
        for i in range(n_segments):
            verts.append(np.array([rho * cos_s[i], rho * sin_s[i], z]))
    for k in range(n_rings, 0, -1):  # bottom hemisphere, equator -> pole
        alpha = (np.pi / 2) * k / n_rings
        rho = radius * np.sin(alpha)
        z = -hh - radius * np.cos(alpha)
        ring_start.append(len(verts))
        for i in range(n_segments):
            verts.append(np.array([rho * cos_s[i], rho * sin_s[i], z]))
    bottom_pole = len(verts)
    verts.append(np.array([0.0, 0.0, -hh - radius]))

    faces = []
    first = ring_start[0]
    for i in range(n_segments):
        j = (i + 1) % n_segments
        faces.append((0, first + i, first + j))  # top pole fan
    for r in range(len(ring_start) - 1):
        ra, rb = ring_start[r], ring_start[r + 1]
        for i in range(n_segments):
            j = (i + 1) % n_segments
            faces += [(ra + i, rb + i, rb + j), (ra + i, rb + j, ra + j)]
    last = ring_start[-1]
    for i in range(n_segments):
        j = (i + 1) % n_segments
        faces.append((bottom_pole, last + j, last + i))  # bottom pole fan
    return TriMesh(np.asarray(verts), np.asarray(faces, dtype=np.int64))


SHAPES = {
    "cube": lambda: box(1.0, 1.0, 1.0),
    "sphere": lambda: icosphere(3, 0.5),
    "lprism": lambda: l_prism(1.0, 1.0),
    "torus": lambda: torus(0.35, 0.15),
    "capsule": lambda: capsule(0.25, 0.5),
}


def make_shape(name: str) -> TriMesh:
    try:
        return SHAPES[name]()
    except KeyError:
        raise ValueError(f"unknown shape {name!r}; choose from {sorted(SHAPES)}") from None
