"""Pinhole camera math, raster frame types, and grid triangulation.

Conventions (fixed for the whole package):
  * camera axes: x right, y down, z forward; poses are camera-to-world
  * pixel (row r, col c) has its center at continuous coords (c + 0.5, r + 0.5)
  * depth is z-depth (distance along the camera forward axis), not ray length
  * invalid depth is encoded as 0 in rasters
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DepthRangeError, BehindCameraError, DimensionMismatchError

D_MIN = 0.01
D_MAX = 1000.0

_Z_EPS = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError("focal lengths must be positive")
        if self.width < 2 or self.height < 2:
            raise ConfigError("image must be at least 2x2")
        if not (0 < self.cx < self.width) or not (0 < self.cy < self.height):
            raise ConfigError("principal point must lie inside the image")

    def to_dict(self):
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d) -> "Intrinsics":
        return cls(fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]),
                   cy=float(d["cy"]), width=int(d["width"]), height=int(d["height"]))


class Pose:
    """Camera-to-world rigid transform: world_point = R @ cam_point + t."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation, translation):
        R = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(translation, dtype=np.float64).reshape(3)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6):
            raise ConfigError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise ConfigError("rotation determinant is not +1")
        self.rotation = R
        self.translation = t

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        """4x4 camera-to-world matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        return cls(m[:3, :3], m[:3, 3])

    def cam_to_world(self, pts_cam: np.ndarray) -> np.ndarray:
        return pts_cam @ self.rotation.T + self.translation

    def world_to_cam(self, pts_world: np.ndarray) -> np.ndarray:
        return (pts_world - self.translation) @ self.rotation

    def __eq__(self, other):
        return (isinstance(other, Pose)
                and np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    def __repr__(self):
        return f"Pose(t={self.translation.tolist()})"


def pose_from_yaw_pitch(yaw: float, pitch: float, position=(0.0, 0.0, 0.0)) -> Pose:
    """Camera pose from yaw about world y and pitch; positive pitch looks down (+y)."""
    cy_, sy_ = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    ry = np.array([[cy_, 0.0, sy_], [0.0, 1.0, 0.0], [-sy_, 0.0, cy_]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, sp], [0.0, -sp, cp]])
    return Pose(ry @ rx, np.asarray(position, dtype=np.float64))


@dataclass
class Frame:
    """One RGB-D observation: the unit of generation and fusion."""

    image: np.ndarray            # (H, W, 3) float32 in [0, 1]
    depth: np.ndarray            # (H, W) float32 z-depth, 0 = invalid
    mask: np.ndarray             # (H, W) uint8, 1 = valid content
    pose: Pose
    intrinsics: Intrinsics
    remote_mask: np.ndarray | None = None   # 1 = remote content, excluded from mesh

    def __post_init__(self):
        h, w = self.intrinsics.height, self.intrinsics.width
        for name, arr, shape in (("image", self.image, (h, w, 3)),
                                 ("depth", self.depth, (h, w)),
                                 ("mask", self.mask, (h, w))):
            if arr.shape != shape:
                raise DimensionMismatchError(f"frame {name} has shape {arr.shape}, expected {shape}")
        if self.remote_mask is not None and self.remote_mask.shape != (h, w):
            raise DimensionMismatchError("remote_mask dimensions do not match intrinsics")

    def remote(self) -> np.ndarray:
        if self.remote_mask is None:
            return np.zeros(self.depth.shape, dtype=np.uint8)
        return self.remote_mask


class TriMesh:
    """Colored triangle mesh: float64 positions, float32 colors, int32 face triples."""

    __slots__ = ("vertices", "colors", "faces")

    def __init__(self, vertices, colors, faces):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.colors = np.ascontiguousarray(colors, dtype=np.float32).reshape(-1, 3)
        self.faces = np.ascontiguousarray(faces, dtype=np.int32).reshape(-1, 3)
        if len(self.colors) != len(self.vertices):
            raise DimensionMismatchError("one color per vertex required")

    @classmethod
    def empty(cls) -> "TriMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def copy(self) -> "TriMesh":
        return TriMesh(self.vertices.copy(), self.colors.copy(), self.faces.copy())

    def validate(self):
        if self.num_faces and self.faces.max(initial=-1) >= self.num_vertices:
            raise DimensionMismatchError("face index out of range")
        if not np.isfinite(self.vertices).all():
            raise DimensionMismatchError("non-finite vertex position")
        if self.num_faces:
            f = self.faces
            if ((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])).any():
                raise DimensionMismatchError("degenerate face triple")


@dataclass(frozen=True)
class TriangulationConfig:
    """Grid triangulation knobs; depth_ratio_threshold drops rubber-sheet faces."""

    depth_ratio_threshold: float = 0.10


def unproject_pixel(u: float, v: float, z: float, intr: Intrinsics, pose: Pose) -> np.ndarray:
    """Lift one continuous pixel coordinate at depth z to a world point."""
    if not (D_MIN <= z <= D_MAX):
        raise DepthRangeError(f"depth {z} outside [{D_MIN}, {D_MAX}]")
    p_cam = np.array([(u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z])
    return pose.cam_to_world(p_cam)


def project_point(p, intr: Intrinsics, pose: Pose):
    """World point -> (u, v, z). Raises BehindCameraError for z <= 1e-9."""
    pc = pose.world_to_cam(np.asarray(p, dtype=np.float64))
    z = pc[2]
    if z <= _Z_EPS:
        raise BehindCameraError(f"point has camera depth {z}")
    u = intr.fx * pc[0] / z + intr.cx
    v = intr.fy * pc[1] / z + intr.cy
    return u, v, z


def unproject_raster(depth: np.ndarray, eligible: np.ndarray, intr: Intrinsics, pose: Pose) -> np.ndarray:
    """World positions for eligible pixels in raster order, at pixel centers."""
    rows, cols = np.nonzero(eligible)
    z = depth[rows, cols].astype(np.float64)
    u = cols.astype(np.float64) + 0.5
    v = rows.astype(np.float64) + 0.5
    pts = np.empty((len(rows), 3))
    pts[:, 0] = (u - intr.cx) * z / intr.fx
    pts[:, 1] = (v - intr.cy) * z / intr.fy
    pts[:, 2] = z
    return pose.cam_to_world(pts)


def grid_faces(eligible: np.ndarray, depth: np.ndarray, depth_ratio_threshold: float) -> np.ndarray:
    """Two triangles per fully-eligible 2x2 cell, indexed into the raster-order
    enumeration of eligible pixels; faces whose relative depth spread exceeds
    the threshold are dropped.
    """
    h, w = eligible.shape
    index = np.full((h, w), -1, dtype=np.int64)
    index[eligible] = np.arange(int(eligible.sum()))

    cell = eligible[:-1, :-1] & eligible[:-1, 1:] & eligible[1:, :-1] & eligible[1:, 1:]
    rows, cols = np.nonzero(cell)
    if len(rows) == 0:
        return np.zeros((0, 3), dtype=np.int32)

    tl = index[rows, cols]
    tr = index[rows, cols + 1]
    bl = index[rows + 1, cols]
    br = index[rows + 1, cols + 1]
    d_tl = depth[rows, cols].astype(np.float64)
    d_tr = depth[rows, cols + 1].astype(np.float64)
    d_bl = depth[rows + 1, cols].astype(np.float64)
    d_br = depth[rows + 1, cols + 1].astype(np.float64)

    def keep(d0, d1, d2):
        lo = np.minimum(np.minimum(d0, d1), d2)
        hi = np.maximum(np.maximum(d0, d1), d2)
        return (hi - lo) <= depth_ratio_threshold * lo

    # cell raster order, upper-left triangle before lower-right
    faces = np.stack([np.stack([tl, bl, tr], axis=1),
                      np.stack([tr, bl, br], axis=1)], axis=1)
    kept = np.stack([keep(d_tl, d_bl, d_tr), keep(d_tr, d_bl, d_br)], axis=1)
    return faces.reshape(-1, 3)[kept.reshape(-1)].astype(np.int32)


def build_mesh_from_frame(frame: Frame, cfg: TriangulationConfig = TriangulationConfig()) -> TriMesh:
    """Unproject eligible pixels (mask=1, not remote) and grid-triangulate them."""
    eligible = (frame.mask > 0) & (frame.remote() == 0)
    if not eligible.any():
        return TriMesh.empty()
    bad = eligible & ~((frame.depth >= D_MIN) & (frame.depth <= D_MAX))
    if bad.any():
        raise DepthRangeError(f"{int(bad.sum())} eligible pixels have invalid depth")
    verts = unproject_raster(frame.depth, eligible, frame.intrinsics, frame.pose)
    colors = frame.image[eligible].astype(np.float32)
    faces = grid_faces(eligible, frame.depth, cfg.depth_ratio_threshold)
    return TriMesh(verts, colors, faces)
