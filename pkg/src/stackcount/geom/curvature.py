"""Discrete integrated mean curvature and the shape complexity score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hull import convex_hull
from .mesh import MeshError, TriMesh, check_mesh, mesh_volume


@dataclass(frozen=True)
class ComplexityScore:
    kappa: float  # curvature term, already scaled by AABB diagonal and kappa0
    convexity_defect: float  # (V_hull - V) / V_hull, in [0, 1)
    total: float


def integrated_mean_curvature(mesh: TriMesh) -> float:
    """Sum over edges of length x signed dihedral angle / 2.

    Convex edges contribute positively. Linear in uniform scale; converges to
    the smooth integral under refinement.
    """
    if not check_mesh(mesh)["watertight"]:
        raise MeshError("integrated mean curvature requires a watertight mesh")
    verts = mesh.vertices
    tris = mesh.triangles
    corners = verts[tris]
    normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = normals / norms

    # directed half-edge -> owning triangle
    half = {}
    for ti, (a, b, c) in enumerate(tris):
        half[(a, b)] = ti
        half[(b, c)] = ti
        half[(c, a)] = ti

    total = 0.0
    for (u, v), t1 in half.items():
        if u > v:
            continue  # visit each undirected edge once
        t2 = half[(v, u)]
        n1 = normals[t1]
        n2 = normals[t2]
        edge = verts[v] - verts[u]
        length = np.linalg.norm(edge)
        e_hat = edge / length
        theta = np.arctan2(np.dot(np.cross(n1, n2), e_hat), np.dot(n1, n2))
        total += length * theta / 2.0
    return float(total)


def complexity_score(mesh: TriMesh, kappa0: float) -> ComplexityScore:
    """Curvature term (scaled by the AABB diagonal and a dataset max) plus convexity defect."""
    if not kappa0 > 0:
        raise ValueError("kappa0 must be positive")
    kappa = integrated_mean_curvature(mesh)
    diag = mesh.aabb.diagonal
    kappa_term = kappa / (diag * kappa0)
    v = mesh_volume(mesh)
    v_hull = mesh_volume(convex_hull(mesh.vertices))
    defect = (v_hull - v) / v_hull
    return ComplexityScore(kappa=float(kappa_term), convexity_defect=float(defect),
                           total=float(kappa_term + defect))


def scaled_curvature(mesh: TriMesh) -> float:
    """kappa / AABB-diagonal; the quantity whose dataset max defines kappa0."""
    return integrated_mean_curvature(mesh) / mesh.aabb.diagonal
