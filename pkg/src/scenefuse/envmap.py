"""Equirectangular environment map for remote (infinite-depth) content.

Sphere parameterization: longitude theta = atan2(x, z) in [-pi, pi), latitude
phi = asin(-y) in [-pi/2, pi/2] (world +y is down, so phi=+pi/2 is straight up).
The 2:1 texture maps s = (theta/2pi + 0.5)*W, t = (0.5 - phi/pi)*H; forward
(0,0,1) lands at the texture center and the top row is the up pole.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .geometry import Intrinsics, Pose

_TWO_PI = 2.0 * np.pi


class EnvMap:
    """Equirectangular RGB texture plus a validity mask (1 = written texel)."""

    __slots__ = ("color", "valid")

    def __init__(self, width: int = 4096, height: int = 2048):
        if width != 2 * height:
            raise ConfigError("environment map must be 2:1 (width = 2*height)")
        self.color = np.zeros((height, width, 3), dtype=np.float32)
        self.valid = np.zeros((height, width), dtype=np.uint8)

    @property
    def width(self) -> int:
        return self.color.shape[1]

    @property
    def height(self) -> int:
        return self.color.shape[0]

    def copy(self) -> "EnvMap":
        out = EnvMap(self.width, self.height)
        out.color[:] = self.color
        out.valid[:] = self.valid
        return out

    @classmethod
    def from_arrays(cls, color: np.ndarray, valid: np.ndarray) -> "EnvMap":
        h, w = valid.shape
        out = cls(w, h)
        out.color[:] = color
        out.valid[:] = valid
        return out


def dir_to_texel(d: np.ndarray, width: int, height: int):
    """Unit direction(s) -> continuous texel coords (s, t)."""
    d = np.asarray(d, dtype=np.float64)
    single = d.ndim == 1
    d = np.atleast_2d(d)
    norms = np.linalg.norm(d, axis=1)
    if np.abs(norms - 1.0).max() > 1e-6:
        raise DimensionMismatchError("directions must be unit length")
    theta = np.arctan2(d[:, 0], d[:, 2])
    phi = np.arcsin(np.clip(-d[:, 1], -1.0, 1.0))
    s = (theta / _TWO_PI + 0.5) * width
    t = (0.5 - phi / np.pi) * height
    if single:
        return float(s[0]), float(t[0])
    return s, t


def texel_to_dir(s, t, width: int, height: int) -> np.ndarray:
    """Continuous texel coords -> unit direction; exact inverse of dir_to_texel."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    single = s.ndim == 0
    s, t = np.atleast_1d(s), np.atleast_1d(t)
    if (s < 0).any() or (s >= width).any() or (t < 0).any() or (t > height).any():
        raise DimensionMismatchError("texel coordinates out of range")
    theta = (s / width - 0.5) * _TWO_PI
    phi = (0.5 - t / height) * np.pi
    cp = np.cos(phi)
    d = np.stack([np.sin(theta) * cp, -np.sin(phi), np.cos(theta) * cp], axis=1)
    return d[0] if single else d


def _texel_indices(s, t, width: int, height: int):
    si = np.floor(s).astype(np.int64) % width
    ti = np.clip(np.floor(t).astype(np.int64), 0, height - 1)
    return si, ti


def _pixel_ray_dirs(intr: Intrinsics, pose: Pose) -> np.ndarray:
    """World-space unit ray directions through every pixel center, (H*W, 3)."""
    cols, rows = np.meshgrid(np.arange(intr.width), np.arange(intr.height))
    x = (cols.ravel() + 0.5 - intr.cx) / intr.fx
    y = (rows.ravel() + 0.5 - intr.cy) / intr.fy
    d = np.stack([x, y, np.ones_like(x)], axis=1)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d @ pose.rotation.T


def splat_remote(image: np.ndarray, remote_mask: np.ndarray, pose: Pose,
                 intr: Intrinsics, env: EnvMap) -> EnvMap:
    """Write remote pixels into the map (translation ignored: remote content is
    at infinity). Raster order, last write wins; returns a new EnvMap."""
    if remote_mask.shape != image.shape[:2]:
        raise DimensionMismatchError("remote mask dimensions do not match image")
    out = env.copy()
    sel = np.asarray(remote_mask).ravel() > 0
    if not sel.any():
        return out
    dirs = _pixel_ray_dirs(intr, pose)[sel]
    s, t = dir_to_texel(dirs, out.width, out.height)
    si, ti = _texel_indices(s, t, out.width, out.height)
    flat = ti * out.width + si
    # keep only the last raster-order write per texel (deterministic overwrite)
    _, rev_first = np.unique(flat[::-1], return_index=True)
    keep = len(flat) - 1 - rev_first
    colors = np.asarray(image, dtype=np.float32).reshape(-1, 3)[sel]
    out.color[ti[keep], si[keep]] = colors[keep]
    out.valid[ti[keep], si[keep]] = 1
    return out


def render_envmap(pose: Pose, intr: Intrinsics, env: EnvMap):
    """Nearest-texel lookup along every pixel ray; rotation-only, so output is
    independent of camera translation. Returns (image, validity mask)."""
    dirs = _pixel_ray_dirs(intr, pose)
    s, t = dir_to_texel(dirs, env.width, env.height)
    si, ti = _texel_indices(s, t, env.width, env.height)
    image = env.color[ti, si].reshape(intr.height, intr.width, 3)
    mask = env.valid[ti, si].reshape(intr.height, intr.width)
    image = np.where(mask[..., None] > 0, image, 0.0).astype(np.float32)
    return image, mask.astype(np.uint8)


def composite(mesh_render, env_render):
    """Layer the mesh over the environment background: mesh wins where covered,
    else environment where valid, else hole. Returns (image, combined mask)."""
    mesh_img, _, mesh_mask = mesh_render
    env_img, env_mask = env_render
    if mesh_img.shape != env_img.shape:
        raise DimensionMismatchError("composite inputs must share dimensions")
    use_mesh = mesh_mask[..., None] > 0
    use_env = (env_mask[..., None] > 0) & ~use_mesh
    image = np.where(use_mesh, mesh_img, np.where(use_env, env_img, 0.0)).astype(np.float32)
    mask = ((mesh_mask > 0) | (env_mask > 0)).astype(np.uint8)
    return image, mask
