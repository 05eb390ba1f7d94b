"""Open-top container shells and their specs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geom import TriMesh, AABB


class ContainerError(ValueError):
    pass


@dataclass(frozen=True)
class ContainerSpec:
    """Container cavity description.

    inner_dims are the cavity extents; walls and floor of thickness
    wall_thickness_ratio x min(inner_dims) are added outside the cavity.
    The cavity floor's top face is centered at base_center, cavity interior
    occupies base_center + [-w/2, w/2] x [-d/2, d/2] x [0, h].
    """

    inner_dims: np.ndarray
    wall_thickness_ratio: float
    base_center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    has_container: bool = True
    up_axis: int = 2

    def __post_init__(self):
        dims = np.asarray(self.inner_dims, dtype=np.float64).reshape(3)
        base = np.asarray(self.base_center, dtype=np.float64).reshape(3)
        object.__setattr__(self, "inner_dims", dims)
        object.__setattr__(self, "base_center", base)
        if self.up_axis != 2:
            raise ContainerError("only z-up containers are supported")
        if np.any(dims <= 0):
            raise ContainerError(f"inner_dims must be positive, got {dims}")
        if self.has_container:
            t = self.wall_thickness_ratio
            if not 0.01 <= t <= 0.05:
                raise ContainerError(
                    f"wall_thickness_ratio {t} outside the supported [0.01, 0.05] range"
                )

    @property
    def wall_thickness(self) -> float:
        """Wall/floor thickness in meters."""
        if not self.has_container:
            return 0.0
        return float(self.wall_thickness_ratio * self.inner_dims.min())

    @property
    def cavity_aabb(self) -> AABB:
        half = self.inner_dims / 2.0
        lo = self.base_center + np.array([-half[0], -half[1], 0.0])
        hi = self.base_center + np.array([half[0], half[1], self.inner_dims[2]])
        return AABB(lo, hi)

    @property
    def outer_aabb(self) -> AABB:
        cav = self.cavity_aabb
        t = self.wall_thickness
        return AABB(cav.min - np.array([t, t, t]), cav.max + np.array([t, t, 0.0]))

    def to_dict(self) -> dict:
        return {
            "dims": [float(x) for x in self.inner_dims],
            "t": float(self.wall_thickness_ratio),
            "base_center": [float(x) for x in self.base_center],
            "has_container": bool(self.has_container),
        }

    @staticmethod
    def from_dict(d: dict) -> "ContainerSpec":
        return ContainerSpec(
            inner_dims=np.asarray(d["dims"], dtype=np.float64),
            wall_thickness_ratio=float(d["t"]),
            base_center=np.asarray(d.get("base_center", (0, 0, 0)), dtype=np.float64),
            has_container=bool(d.get("has_container", True)),
        )


def make_container(spec: ContainerSpec) -> TriMesh:
    """Watertight open-top box shell (outer box minus cavity), or an empty mesh.

    The shell is a closed solid: outer walls and bottom, inner cavity walls
    and floor, and the flat rim annulus at the cavity top.
    """
    if not spec.has_container:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    if spec.wall_thickness <= 0:
        raise ContainerError("wall thickness must be positive for a container shell")

    w, d, h = spec.inner_dims
    t = spec.wall_thickness
    cx, cy, cz = spec.base_center
    ix0, ix1 = cx - w / 2, cx + w / 2
    iy0, iy1 = cy - d / 2, cy + d / 2
    ox0, ox1 = ix0 - t, ix1 + t
    oy0, oy1 = iy0 - t, iy1 + t
    z0, z1, zb = cz, cz + h, cz - t  # cavity floor, rim, outer bottom

    verts = np.array(
        [
            # 0-3 inner ring at cavity floor
            (ix0, iy0, z0), (ix1, iy0, z0), (ix1, iy1, z0), (ix0, iy1, z0),
            # 4-7 inner ring at rim
            (ix0, iy0, z1), (ix1, iy0, z1), (ix1, iy1, z1), (ix0, iy1, z1),
            # 8-11 outer ring at bottom
            (ox0, oy0, zb), (ox1, oy0, zb), (ox1, oy1, zb), (ox0, oy1, zb),
            # 12-15 outer ring at rim
            (ox0, oy0, z1), (ox1, oy0, z1), (ox1, oy1, z1), (ox0, oy1, z1),
        ]
    )

    def quad(a, b, c, d_):
        return [(a, b, c), (a, c, d_)]

    faces = []
    faces += quad(8, 11, 10, 9)  # outer bottom, -z
    faces += quad(8, 9, 13, 12)  # outer -y
    faces += quad(10, 11, 15, 14)  # outer +y
    faces += quad(9, 10, 14, 13)  # outer +x
    faces += quad(11, 8, 12, 15)  # outer -x
    faces += quad(0, 1, 2, 3)  # cavity floor, +z into cavity
    faces += quad(1, 0, 4, 5)  # inner wall at -y, faces +y (into cavity)
    faces += quad(3, 2, 6, 7)  # inner wall at +y, faces -y
    faces += quad(2, 1, 5, 6)  # inner wall at +x, faces -x
    faces += quad(0, 3, 7, 4)  # inner wall at -x, faces +x
    faces += quad(12, 13, 5, 4)  # rim -y, +z
    faces += quad(14, 15, 7, 6)  # rim +y, +z
    faces += quad(13, 14, 6, 5)  # rim +x, +z
    faces += quad(15, 12, 4, 7)  # rim -x, +z
    return TriMesh(verts, np.asarray(faces, dtype=np.int64))
