"""scenefuse: interactive 3D scene authoring by incremental RGB-D mesh fusion."""

__version__ = "0.1.0"

from .geometry import (
    Intrinsics,
    Pose,
    Frame,
    TriMesh,
    TriangulationConfig,
    build_mesh_from_frame,
    project_point,
    unproject_pixel,
)
from .rasterize import render_mesh

__all__ = [
    "Intrinsics",
    "Pose",
    "Frame",
    "TriMesh",
    "TriangulationConfig",
    "build_mesh_from_frame",
    "project_point",
    "unproject_pixel",
    "render_mesh",
    "__version__",
]
