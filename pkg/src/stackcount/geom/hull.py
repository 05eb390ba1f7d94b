"""Convex hulls and alpha-shape (concave) hulls over 3D point sets."""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, QhullError

from .mesh import MeshError, TriMesh


class HullError(MeshError):
    """Degenerate input or an empty/disconnected alpha shape."""


def convex_hull(points) -> TriMesh:
    """Watertight, outward-oriented convex hull mesh of >= 4 non-coplanar points."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 4:
        raise HullError(f"convex hull needs >= 4 points, got {len(pts)}")
    try:
        hull = ConvexHull(pts)
    except QhullError as e:
        raise HullError(f"degenerate point set for convex hull: {e}") from None
    simplices = hull.simplices.copy()
    normals = hull.equations[:, :3]
    corners = pts[simplices]
    face_n = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    flip = np.einsum("ij,ij->i", face_n, normals) < 0
    simplices[flip] = simplices[flip][:, [0, 2, 1]]
    used = np.unique(simplices)
    remap = np.full(len(pts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh(pts[used], remap[simplices])


def _tet_circumradii(pts: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Circumradius per tetrahedron; inf for degenerate ones."""
    a = pts[tets[:, 0]]
    rows = np.stack([pts[tets[:, k]] - a for k in (1, 2, 3)], axis=1)  # (n, 3, 3)
    rhs = 0.5 * np.einsum("nij,nij->ni", rows, rows)
    det = np.linalg.det(rows)
    radii = np.full(len(tets), np.inf)
    ok = np.abs(det) > 1e-14
    if ok.any():
        centers = np.linalg.solve(rows[ok], rhs[ok])
        radii[ok] = np.linalg.norm(centers, axis=1)
    return radii


def alpha_concave_hull(points, alpha: float) -> TriMesh:
    """Alpha-shape boundary mesh: union of Delaunay tetrahedra with circumradius < alpha.

    alpha is in absolute length units; alpha -> inf recovers the convex hull.
    Raises HullError when the shape is empty or splits into several components.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 4:
        raise HullError(f"alpha shape needs >= 4 points, got {len(pts)}")
    if not alpha > 0:
        raise HullError("alpha must be positive")
    try:
        tri = Delaunay(pts)
    except QhullError as e:
        raise HullError(f"degenerate point set for alpha shape: {e}") from None
    tets = tri.simplices
    keep = _tet_circumradii(pts, tets) < alpha
    kept = np.nonzero(keep)[0]
    if kept.size == 0:
        raise HullError(f"alpha={alpha:g} keeps no tetrahedra (0 components)")

    # component count over kept tets through Delaunay face neighbors
    index = np.full(len(tets), -1, dtype=np.int64)
    index[kept] = np.arange(kept.size)
    parent = np.arange(kept.size)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for pos, t in enumerate(kept):
        for nb in tri.neighbors[t]:
            if nb >= 0 and keep[nb]:
                ra, rb = find(pos), find(index[nb])
                if ra != rb:
                    parent[rb] = ra
    n_components = len({find(i) for i in range(kept.size)})
    if n_components != 1:
        raise HullError(
            f"alpha={alpha:g} yields a disconnected shape ({n_components} components)"
        )

    # boundary faces: kept tet sides whose neighbor is outside the kept set,
    # oriented away from the opposite vertex of the owning tet
    faces = []
    opposite = []
    for t in kept:
        tet = tets[t]
        for k in range(4):
            nb = tri.neighbors[t][k]
            if nb < 0 or not keep[nb]:
                face = [tet[j] for j in range(4) if j != k]
                faces.append(face)
                opposite.append(tet[k])
    faces = np.asarray(faces, dtype=np.int64)
    opposite = np.asarray(opposite, dtype=np.int64)
    corners = pts[faces]
    n = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    inward = np.einsum("ij,ij->i", n, pts[opposite] - corners[:, 0]) > 0
    faces[inward] = faces[inward][:, [0, 2, 1]]
    used = np.unique(faces)
    remap = np.full(len(pts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh(pts[used], remap[faces])


def default_alpha(points) -> float:
    """0.1 x AABB diagonal of the point set."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return 0.1 * float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
