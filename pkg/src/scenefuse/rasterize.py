"""Deterministic software rasterizer: z-buffered, perspective-correct vertex colors.

Coverage rule: a pixel is covered iff its center lies inside (or on the edge of)
a screen-space non-degenerate triangle whose vertices are all in front of the
camera. Equal-depth ties resolve to the lower face index, so output is
bit-reproducible regardless of face count.
"""

from __future__ import annotations

import numpy as np

from .geometry import Intrinsics, Pose, TriMesh

_Z_EPS = 1e-9
_CHUNK_ROWS = 1 << 21


def render_mesh(mesh: TriMesh, pose: Pose, intr: Intrinsics):
    """Rasterize the mesh at the given camera. Returns (image, depth, mask):
    float32 (H,W,3) color, float32 (H,W) z-depth (0 where uncovered),
    uint8 (H,W) coverage mask.
    """
    h, w = intr.height, intr.width
    image = np.zeros((h, w, 3), dtype=np.float32)
    depth = np.zeros((h, w), dtype=np.float32)
    mask = np.zeros((h, w), dtype=np.uint8)
    if mesh.num_faces == 0 or mesh.num_vertices == 0:
        return image, depth, mask

    cam = pose.world_to_cam(mesh.vertices)
    z = cam[:, 2]
    front = z > _Z_EPS
    sx = np.where(front, intr.fx * cam[:, 0] / np.where(front, z, 1.0) + intr.cx, 0.0)
    sy = np.where(front, intr.fy * cam[:, 1] / np.where(front, z, 1.0) + intr.cy, 0.0)

    f = mesh.faces
    usable = front[f[:, 0]] & front[f[:, 1]] & front[f[:, 2]]
    face_ids = np.nonzero(usable)[0]
    if len(face_ids) == 0:
        return image, depth, mask

    fx0, fx1, fx2 = (sx[f[face_ids, k]] for k in range(3))
    fy0, fy1, fy2 = (sy[f[face_ids, k]] for k in range(3))

    # pixel i center is at i + 0.5, so center >= minx  <=>  i >= minx - 0.5;
    # pad by a micro-pixel so centers within snap tolerance of the box edge
    # still become candidates
    pad = 1e-6
    ix0 = np.maximum(np.ceil(np.minimum(np.minimum(fx0, fx1), fx2) - 0.5 - pad), 0).astype(np.int64)
    ix1 = np.minimum(np.floor(np.maximum(np.maximum(fx0, fx1), fx2) - 0.5 + pad), w - 1).astype(np.int64)
    iy0 = np.maximum(np.ceil(np.minimum(np.minimum(fy0, fy1), fy2) - 0.5 - pad), 0).astype(np.int64)
    iy1 = np.minimum(np.floor(np.maximum(np.maximum(fy0, fy1), fy2) - 0.5 + pad), h - 1).astype(np.int64)

    widths = ix1 - ix0 + 1
    heights = iy1 - iy0 + 1
    counts = np.maximum(widths, 0) * np.maximum(heights, 0)
    nonempty = counts > 0
    face_ids = face_ids[nonempty]
    if len(face_ids) == 0:
        return image, depth, mask
    ix0, iy0, widths = ix0[nonempty], iy0[nonempty], widths[nonempty]
    counts = counts[nonempty]

    zbuf = np.full(h * w, np.inf)
    fbuf = np.full(h * w, np.iinfo(np.int64).max, dtype=np.int64)
    cbuf = np.zeros((h * w, 3))

    inv_z = 1.0 / z
    col_over_z = mesh.colors.astype(np.float64) * inv_z[:, None]

    # chunk faces so the flattened candidate-pixel table stays bounded
    cum = np.cumsum(counts)
    a = 0
    while a < len(face_ids):
        base = cum[a - 1] if a > 0 else 0
        b = int(np.searchsorted(cum, base + _CHUNK_ROWS, side="right"))
        b = min(max(b, a + 1), len(face_ids))
        _rasterize_chunk(face_ids[a:b], ix0[a:b], iy0[a:b], widths[a:b], counts[a:b],
                         f, sx, sy, inv_z, col_over_z, w, zbuf, fbuf, cbuf)
        a = b

    covered = np.isfinite(zbuf)
    mask.flat[covered] = 1
    depth.flat[covered] = zbuf[covered]
    image.reshape(-1, 3)[covered] = cbuf[covered]
    return image, depth, mask


def _rasterize_chunk(face_ids, ix0, iy0, widths, counts, faces, sx, sy, inv_z, col_over_z,
                     w, zbuf, fbuf, cbuf):
    total = int(counts.sum())
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    rep = np.repeat(np.arange(len(face_ids)), counts)
    offset = np.arange(total) - np.repeat(starts, counts)
    w_rep = widths[rep]
    px = ix0[rep] + offset % w_rep
    py = iy0[rep] + offset // w_rep
    pcx = px + 0.5
    pcy = py + 0.5

    fid = face_ids[rep]
    v0, v1, v2 = faces[fid, 0], faces[fid, 1], faces[fid, 2]
    x0, y0 = sx[v0], sy[v0]
    x1, y1 = sx[v1], sy[v1]
    x2, y2 = sx[v2], sy[v2]

    # snap edge values within float-error distance of zero so pixel centers
    # that sit exactly on shared vertices/edges stay watertight
    def edge(ax, ay, bx, by):
        t1 = (bx - ax) * (pcy - ay)
        t2 = (by - ay) * (pcx - ax)
        e = t1 - t2
        tol = 1e-8 * (1.0 + np.abs(t1) + np.abs(t2))
        return e, tol

    e01, t01 = edge(x0, y0, x1, y1)
    e12, t12 = edge(x1, y1, x2, y2)
    e20, t20 = edge(x2, y2, x0, y0)
    area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
    inside = (((e01 >= -t01) & (e12 >= -t12) & (e20 >= -t20))
              | ((e01 <= t01) & (e12 <= t12) & (e20 <= t20))) & (area != 0)
    if not inside.any():
        return

    idx = np.nonzero(inside)[0]
    l0 = e12[idx] / area[idx]
    l1 = e20[idx] / area[idx]
    l2 = e01[idx] / area[idx]
    v0, v1, v2 = v0[idx], v1[idx], v2[idx]
    interp_inv_z = l0 * inv_z[v0] + l1 * inv_z[v1] + l2 * inv_z[v2]
    z_px = 1.0 / interp_inv_z
    color = (l0[:, None] * col_over_z[v0] + l1[:, None] * col_over_z[v1]
             + l2[:, None] * col_over_z[v2]) / interp_inv_z[:, None]

    pix = py[idx] * w + px[idx]
    fid = fid[idx]

    # nearest surface per pixel, lower face index breaking exact ties
    order = np.lexsort((fid, z_px, pix))
    pix_s = pix[order]
    first = np.ones(len(pix_s), dtype=bool)
    first[1:] = pix_s[1:] != pix_s[:-1]
    sel = order[first]

    pix_w, z_w, f_w, c_w = pix[sel], z_px[sel], fid[sel], color[sel]
    better = (z_w < zbuf[pix_w]) | ((z_w == zbuf[pix_w]) & (f_w < fbuf[pix_w]))
    upd = np.nonzero(better)[0]
    zbuf[pix_w[upd]] = z_w[upd]
    fbuf[pix_w[upd]] = f_w[upd]
    cbuf[pix_w[upd]] = c_w[upd]
