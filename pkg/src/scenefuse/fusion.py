"""Mesh fusion: triangulate the newly generated pixels of a frame and stitch
them onto the existing mesh at the inpainting-mask edges.

Seam continuity is positional: a one-pixel (configurable) ring of already
covered pixels is re-triangulated using the RENDERED depth, so the new sheet
lands exactly on the existing surface; vertices that coincide with existing
ones within weld_epsilon are welded. Existing geometry is never moved or
deleted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import ConfigError, DimensionMismatchError
from .geometry import (
    D_MIN,
    D_MAX,
    Frame,
    TriMesh,
    TriangulationConfig,
    grid_faces,
    unproject_raster,
)


@dataclass(frozen=True)
class FusionConfig:
    stitch_ring: int = 1
    weld_epsilon: float = 1e-4
    triangulation: TriangulationConfig = field(default_factory=TriangulationConfig)

    def __post_init__(self):
        if self.stitch_ring < 1:
            raise ConfigError("stitch_ring must be >= 1")
        if self.weld_epsilon < 0:
            raise ConfigError("weld_epsilon must be >= 0")

    def to_dict(self):
        return {"stitch_ring": self.stitch_ring, "weld_epsilon": self.weld_epsilon,
                "depth_ratio_threshold": self.triangulation.depth_ratio_threshold}

    @classmethod
    def from_dict(cls, d) -> "FusionConfig":
        return cls(stitch_ring=int(d.get("stitch_ring", 1)),
                   weld_epsilon=float(d.get("weld_epsilon", 1e-4)),
                   triangulation=TriangulationConfig(
                       depth_ratio_threshold=float(d.get("depth_ratio_threshold", 0.10))))


def fuse(existing: TriMesh, frame: Frame, rendered_mask: np.ndarray,
         rendered_depth: np.ndarray, aligned_depth: np.ndarray,
         cfg: FusionConfig = FusionConfig()) -> TriMesh:
    """Append the frame's new geometry to `existing`.

    New-core pixels are those with frame content that the mesh render did not
    cover (and that are not remote); they unproject with the aligned depth.
    The stitch ring extends cfg.stitch_ring pixels into the covered region and
    unprojects with the rendered depth. Returns a new mesh; the input mesh's
    arrays are shared, never mutated.
    """
    shape = frame.depth.shape
    for name, arr in (("rendered_mask", rendered_mask),
                      ("rendered_depth", rendered_depth),
                      ("aligned_depth", aligned_depth)):
        if np.asarray(arr).shape != shape:
            raise DimensionMismatchError(f"{name} shape {np.asarray(arr).shape} != frame {shape}")

    covered = np.asarray(rendered_mask) > 0
    content = frame.mask > 0
    remote = frame.remote() > 0

    new_core = content & ~covered & ~remote
    if not new_core.any():
        return TriMesh(existing.vertices, existing.colors, existing.faces)

    ring_size = 2 * cfg.stitch_ring + 1
    ring = (ndimage.maximum_filter(new_core.astype(np.uint8), size=ring_size,
                                   mode="constant", cval=0) > 0) & covered & ~remote
    # ring pixels need a valid rendered depth to sit on the existing surface
    ring &= rendered_depth > 0
    eligible = new_core | ring

    depth = np.where(ring, rendered_depth, aligned_depth).astype(np.float32)
    bad = eligible & ~((depth >= D_MIN) & (depth <= D_MAX))
    if bad.any():
        raise DimensionMismatchError(f"{int(bad.sum())} fusion pixels lack valid depth")

    verts = unproject_raster(depth, eligible, frame.intrinsics, frame.pose)
    colors = frame.image[eligible].astype(np.float32)
    faces = grid_faces(eligible, depth, cfg.triangulation.depth_ratio_threshold)

    # weld new ring vertices onto coincident existing vertices
    n_existing = existing.num_vertices
    remap = np.arange(len(verts), dtype=np.int64) + n_existing
    drop = np.zeros(len(verts), dtype=bool)
    if n_existing and cfg.weld_epsilon > 0:
        ring_sel = ring[eligible]
        ring_ids = np.nonzero(ring_sel)[0]
        if len(ring_ids):
            tree = cKDTree(existing.vertices)
            dist, nearest = tree.query(verts[ring_ids], distance_upper_bound=cfg.weld_epsilon)
            hit = np.isfinite(dist)
            remap[ring_ids[hit]] = nearest[hit]
            drop[ring_ids[hit]] = True

    keep = ~drop
    new_index = np.full(len(verts), -1, dtype=np.int64)
    new_index[keep] = np.arange(int(keep.sum())) + n_existing
    remap = np.where(drop, remap, new_index)

    out_verts = np.concatenate([existing.vertices, verts[keep]])
    out_colors = np.concatenate([existing.colors, colors[keep]])
    if len(faces):
        mapped = remap[faces]
        degenerate = ((mapped[:, 0] == mapped[:, 1]) | (mapped[:, 1] == mapped[:, 2])
                      | (mapped[:, 0] == mapped[:, 2]))
        mapped = mapped[~degenerate]
        out_faces = np.concatenate([existing.faces, mapped.astype(np.int32)])
    else:
        out_faces = existing.faces
    return TriMesh(out_verts, out_colors, out_faces)


@dataclass
class MeshStats:
    vertex_count: int
    face_count: int
    bbox_min: tuple
    bbox_max: tuple
    anomaly_count: int

    def to_dict(self):
        return {"vertex_count": self.vertex_count, "face_count": self.face_count,
                "bbox_min": list(self.bbox_min), "bbox_max": list(self.bbox_max),
                "anomaly_count": self.anomaly_count}


def mesh_stats(mesh: TriMesh) -> MeshStats:
    """Counts, bounding box, and anomaly tally (0 for a healthy mesh)."""
    anomalies = int((~np.isfinite(mesh.vertices)).any(axis=1).sum())
    if mesh.num_faces:
        f = mesh.faces
        anomalies += int(((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])).sum())
        anomalies += int((f >= mesh.num_vertices).any(axis=1).sum())
        anomalies += int((f < 0).any(axis=1).sum())
    if mesh.num_vertices:
        finite = mesh.vertices[np.isfinite(mesh.vertices).all(axis=1)]
        bbox_min = tuple(finite.min(axis=0)) if len(finite) else ()
        bbox_max = tuple(finite.max(axis=0)) if len(finite) else ()
    else:
        bbox_min = bbox_max = ()
    return MeshStats(mesh.num_vertices, mesh.num_faces, bbox_min, bbox_max, anomalies)
