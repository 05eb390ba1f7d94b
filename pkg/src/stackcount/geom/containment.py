"""Point-in-mesh tests via ray parity and Monte-Carlo volume estimation."""

from __future__ import annotations

import numpy as np

from .. import bvh as _bvh
from .mesh import MeshError, TriMesh, check_mesh

# Barycentric / parameter tolerance below which a hit counts as grazing an
# edge or vertex and the parity ray direction is swapped.
PARITY_EPS = 1e-12


def _mesh_bvh(mesh: TriMesh) -> _bvh.BVH:
    cached = getattr(mesh, "_bvh_cache", None)
    if cached is None:
        cached = _bvh.mesh_bvh(mesh)
        mesh._bvh_cache = cached
    return cached


def contains(mesh: TriMesh, point) -> bool:
    """True iff the point is strictly inside the watertight mesh.

    Points outside the bounding box short-circuit to False. Points on the
    surface may return either value; Monte-Carlo callers treat the surface
    as measure zero.
    """
    if not check_mesh(mesh)["watertight"]:
        raise MeshError("contains() requires a watertight mesh")
    p = np.asarray(point, dtype=np.float64).reshape(3)
    b = _mesh_bvh(mesh)
    return bool(
        _bvh.point_in_bvh(
            b.node_min, b.node_max, b.node_left, b.node_start, b.node_count,
            b.v0, b.v1, b.v2, p[0], p[1], p[2], _bvh.PARITY_DIRECTIONS, PARITY_EPS,
        )
    )


def contains_batch(mesh: TriMesh, points) -> np.ndarray:
    """Vectorized contains() over an (n, 3) array of points."""
    if not check_mesh(mesh)["watertight"]:
        raise MeshError("contains() requires a watertight mesh")
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    b = _mesh_bvh(mesh)
    return _bvh.points_in_bvh(
        b.node_min, b.node_max, b.node_left, b.node_start, b.node_count,
        b.v0, b.v1, b.v2, pts, _bvh.PARITY_DIRECTIONS, PARITY_EPS,
    )


def monte_carlo_volume(mesh: TriMesh, n_samples: int, rng: np.random.Generator):
    """(volume, std_error) from uniform sampling of the mesh AABB."""
    box = mesh.aabb
    pts = rng.uniform(box.min, box.max, size=(int(n_samples), 3))
    inside = contains_batch(mesh, pts)
    p = inside.mean()
    box_volume = float(np.prod(box.extents))
    std_error = float(np.sqrt(p * (1.0 - p) / n_samples)) * box_volume
    return float(p) * box_volume, std_error
