"""Mesh and computational-geometry primitives."""

from .containment import contains, contains_batch, monte_carlo_volume
from .curvature import ComplexityScore, complexity_score, integrated_mean_curvature, scaled_curvature
from .hull import HullError, alpha_concave_hull, convex_hull, default_alpha
from .mesh import (
    AABB,
    MeshError,
    RigidPose,
    TriMesh,
    check_mesh,
    concat_meshes,
    load_obj,
    mesh_volume,
    normalize_to_cube,
    quat_from_axis_angle,
    quat_multiply,
    quat_to_matrix,
    save_obj,
)
from .shapes import SHAPES, box, capsule, icosphere, l_prism, make_shape, torus

__all__ = [
    "AABB",
    "ComplexityScore",
    "HullError",
    "MeshError",
    "RigidPose",
    "SHAPES",
    "TriMesh",
    "alpha_concave_hull",
    "box",
    "capsule",
    "check_mesh",
    "complexity_score",
    "concat_meshes",
    "contains",
    "contains_batch",
    "convex_hull",
    "default_alpha",
    "icosphere",
    "integrated_mean_curvature",
    "l_prism",
    "load_obj",
    "make_shape",
    "mesh_volume",
    "monte_carlo_volume",
    "normalize_to_cube",
    "quat_from_axis_angle",
    "quat_multiply",
    "quat_to_matrix",
    "save_obj",
    "scaled_curvature",
    "torus",
]
