"""Core 3D primitives."""

from .cloud import (
    DEFAULT_SAMPLE_COUNT,
    OrientedPointCloud,
    load_cloud,
    load_features,
    nearest_point,
    nearest_points,
    sample_surface,
    save_cloud,
    save_features,
    signed_penetration,
)
from .hull import ConvexHull, Ray, convex_hull, expand_hull, ray_hull_intersect
from .mesh import (
    TriMesh,
    box,
    concatenate,
    cylinder,
    icosphere,
    load_mesh,
    normalize,
    read_obj,
    read_ply,
    write_obj,
    write_ply,
)
from .voxel import inside_mesh, intersection_volume

__all__ = [
    "DEFAULT_SAMPLE_COUNT", "OrientedPointCloud", "load_cloud", "load_features", "nearest_point",
    "nearest_points", "sample_surface", "save_cloud", "save_features", "signed_penetration",
    "ConvexHull", "Ray", "convex_hull", "expand_hull", "ray_hull_intersect", "TriMesh", "box",
    "concatenate", "cylinder", "icosphere", "load_mesh", "normalize", "read_obj", "read_ply",
    "write_obj", "write_ply", "inside_mesh", "intersection_volume",
]
