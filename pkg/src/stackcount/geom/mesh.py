"""Triangle meshes: OBJ I/O, validation, volumes, normalization, rigid transforms."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEGENERATE_AREA = 1e-12


class MeshError(Exception):
    """Invalid mesh topology, geometry, or file contents."""


@dataclass(frozen=True)
class AABB:
    """Axis-aligned bounding box with min <= max componentwise."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ValueError(f"AABB min {lo} exceeds max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def extents(self) -> np.ndarray:
        return self.max - self.min

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extents))

    def contains_point(self, p) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p >= self.min) and np.all(p <= self.max))

    def intersects(self, other: "AABB") -> bool:
        return bool(np.all(self.min <= other.max) and np.all(other.min <= self.max))

    def expanded(self, margin: float) -> "AABB":
        return AABB(self.min - margin, self.max + margin)

    @staticmethod
    def of_points(points) -> "AABB":
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if pts.shape[0] == 0:
            raise ValueError("cannot bound an empty point set")
        return AABB(pts.min(axis=0), pts.max(axis=0))


@dataclass(frozen=True)
class RigidPose:
    """Rigid placement: unit quaternion (w, x, y, z) plus translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm {n} not within 1e-9 of 1")
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    def matrix(self) -> np.ndarray:
        """3x3 rotation matrix of the quaternion."""
        return quat_to_matrix(self.rotation)

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix().T + self.translation

    def inverse_apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return (pts - self.translation) @ self.matrix()


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=np.float64).reshape(4)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


@dataclass
class TriMesh:
    """Indexed triangle mesh.

    Vertices are float64 (n, 3) in meters, triangles int64 (m, 3). The mesh
    owns no topology caches beyond an optional bounding box.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    _aabb: AABB | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError(
                f"triangle index out of range: indices span [{t.min()}, {t.max()}] "
                f"for {len(v)} vertices"
            )
        self.vertices = v
        self.triangles = t

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def aabb(self) -> AABB:
        if self._aabb is None:
            self._aabb = AABB.of_points(self.vertices)
        return self._aabb

    def triangle_corners(self):
        """(m, 3, 3) array of triangle corner positions."""
        return self.vertices[self.triangles]

    def triangle_areas(self) -> np.ndarray:
        c = self.triangle_corners()
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    def transformed(self, pose: RigidPose) -> "TriMesh":
        return TriMesh(pose.apply(self.vertices), self.triangles.copy())

    def scaled(self, s: float) -> "TriMesh":
        return TriMesh(self.vertices * float(s), self.triangles.copy())

    def translated(self, t) -> "TriMesh":
        return TriMesh(self.vertices + np.asarray(t, dtype=np.float64), self.triangles.copy())

    def validate_nondegenerate(self):
        """Raise if any triangle has area <= 1e-12 after unit normalization."""
        scale = self.aabb.diagonal
        if scale <= 0:
            raise MeshError("mesh has zero extent")
        areas = TriMesh(self.vertices / scale, self.triangles).triangle_areas()
        bad = np.nonzero(areas <= DEGENERATE_AREA)[0]
        if bad.size:
            raise MeshError(f"{bad.size} degenerate triangle(s), first at index {int(bad[0])}")


def concat_meshes(meshes) -> TriMesh:
    meshes = [m for m in meshes if m.n_triangles > 0]
    if not meshes:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    verts = []
    tris = []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += m.n_vertices
    return TriMesh(np.vstack(verts), np.vstack(tris))


def load_obj(path) -> TriMesh:
    """Read the `v`/`f` OBJ subset; non-triangular faces are fan-triangulated.

    Face entries may carry texture/normal slots (`i/t/n`); only the vertex
    index is used. Indices are 1-based, negative indices are not supported.
    """
    vertices = []
    faces = []
    path = Path(path)
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshError(f"{path}:{lineno}: vertex record needs 3 coordinates")
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as e:
                    raise MeshError(f"{path}:{lineno}: bad vertex coordinate: {e}") from None
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshError(f"{path}:{lineno}: face record needs >= 3 vertices")
                idx = []
                for token in parts[1:]:
                    head = token.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise MeshError(f"{path}:{lineno}: bad face index {token!r}") from None
                    if i <= 0:
                        raise MeshError(
                            f"{path}:{lineno}: face index {i} out of range (OBJ is 1-based)"
                        )
                    idx.append(i - 1)
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
            # other record types (vn, vt, usemtl, ...) are ignored
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    tris = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if tris.size and tris.max() >= len(verts):
        raise MeshError(f"{path}: face index {int(tris.max()) + 1} exceeds vertex count {len(verts)}")
    return TriMesh(verts, tris)


def save_obj(mesh: TriMesh, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    for t in mesh.triangles:
        lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    path.write_text("\n".join(lines) + "\n")


def _edge_map(triangles: np.ndarray):
    """Map undirected edge -> list of (triangle, directed orientation) entries."""
    edges = {}
    for ti, (a, b, c) in enumerate(triangles):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            edges.setdefault(key, []).append((ti, u < v))
    return edges


def check_mesh(mesh: TriMesh) -> dict:
    """Report {watertight, components}.

    Watertight means every undirected edge is shared by exactly two triangles
    with opposite half-edge orientation. Components are counted over triangle
    adjacency through shared edges.
    """
    tris = mesh.triangles
    if len(tris) == 0:
        return {"watertight": False, "components": 0}
    edges = _edge_map(tris)
    watertight = True
    for entries in edges.values():
        if len(entries) != 2 or entries[0][1] == entries[1][1]:
            watertight = False
            break

    parent = np.arange(len(tris))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for entries in edges.values():
        root = find(entries[0][0])
        for ti, _ in entries[1:]:
            parent[find(ti)] = root
    components = len({find(i) for i in range(len(tris))})
    return {"watertight": watertight, "components": components}


def mesh_volume(mesh: TriMesh) -> float:
    """Signed volume by the divergence theorem over signed tetrahedra.

    Positive for an outward-oriented closed surface; flips sign with
    orientation. Non-watertight meshes are rejected.
    """
    report = check_mesh(mesh)
    if not report["watertight"]:
        raise MeshError("mesh_volume requires a watertight mesh")
    c = mesh.triangle_corners()
    return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)


def normalize_to_cube(mesh: TriMesh, side: float) -> TriMesh:
    """Uniformly scale and translate so the AABB is origin-centered with max extent = side."""
    if mesh.n_vertices == 0:
        raise MeshError("cannot normalize an empty mesh")
    box = mesh.aabb
    extent = float(box.extents.max())
    if extent <= 0:
        raise MeshError("cannot normalize a zero-extent mesh")
    scale = float(side) / extent
    verts = (mesh.vertices - box.center) * scale
    return TriMesh(verts, mesh.triangles.copy())
