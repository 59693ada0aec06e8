"""Boundary-aware depth alignment.

New frames arrive with monocular depth that is only affine-consistent in
disparity (1/depth). The chain here makes new depth meet the existing surface:
extract the strip of visible pixels bordering the hole, fit a disparity
scale/shift on that strip by least squares, correct the prediction, harmonically
fill the rendered depth across the hole, and blend the two with a blurred
visibility weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import AlignmentFailure, ConfigError, DimensionMismatchError, InpaintAnchorError
from .geometry import D_MIN, D_MAX


@dataclass(frozen=True)
class AlignmentParams:
    """Disparity correction: corrected_disp = alpha * predicted_disp + beta."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ConfigError("alignment params must be finite")

    def to_dict(self):
        return {"alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class AlignConfig:
    dilation_radius: int = 5
    blur_sigma: float = 8.0
    inpaint_iters: int = 500
    inpaint_tol: float = 1e-5
    enabled: bool = True

    def __post_init__(self):
        if self.dilation_radius < 1:
            raise ConfigError("dilation_radius must be >= 1")
        if self.blur_sigma <= 0:
            raise ConfigError("blur_sigma must be positive")
        if self.inpaint_iters < 1:
            raise ConfigError("inpaint_iters must be >= 1")

    def to_dict(self):
        return {"dilation_radius": self.dilation_radius, "blur_sigma": self.blur_sigma,
                "inpaint_iters": self.inpaint_iters, "inpaint_tol": self.inpaint_tol,
                "enabled": self.enabled}

    @classmethod
    def from_dict(cls, d) -> "AlignConfig":
        return cls(dilation_radius=int(d.get("dilation_radius", 5)),
                   blur_sigma=float(d.get("blur_sigma", 8.0)),
                   inpaint_iters=int(d.get("inpaint_iters", 500)),
                   inpaint_tol=float(d.get("inpaint_tol", 1e-5)),
                   enabled=bool(d.get("enabled", True)))


@dataclass
class AlignResult:
    depth: np.ndarray
    params: AlignmentParams
    fallback: bool = False      # least squares failed, identity params used
    clamp_count: int = 0        # pixels clamped during correction


def extract_boundary(mask: np.ndarray, radius: int) -> np.ndarray:
    """Visible pixels within `radius` (Chebyshev) of the hole: dilate the
    inverted mask with a (2r+1)^2 square and intersect with the mask."""
    hole = np.asarray(mask) == 0
    size = 2 * int(radius) + 1
    dilated = ndimage.maximum_filter(hole.astype(np.uint8), size=size,
                                     mode="constant", cval=0)
    return ((dilated > 0) & (np.asarray(mask) > 0)).astype(np.uint8)


def solve_alignment(pred_depth: np.ndarray, rendered_depth: np.ndarray,
                    boundary: np.ndarray) -> AlignmentParams:
    """Closed-form least squares for (alpha, beta) minimizing
    sum over boundary pixels of (alpha/pred + beta - 1/rendered)^2,
    via the 2x2 normal equations."""
    sel = np.asarray(boundary) > 0
    if not sel.any():
        return AlignmentParams(1.0, 0.0)
    p = np.asarray(pred_depth, dtype=np.float64)[sel]
    r = np.asarray(rendered_depth, dtype=np.float64)[sel]
    if (p <= 0).any() or (r <= 0).any():
        raise DimensionMismatchError("boundary pixels must have valid depth in both maps")
    x = 1.0 / p
    y = 1.0 / r
    n = x.size
    mx = x.mean()
    var = ((x - mx) ** 2).sum() / n
    if var < 1e-12:
        alpha = y.mean() / mx
        beta = 0.0
    else:
        sxx = (x * x).sum()
        sx = x.sum()
        sxy = (x * y).sum()
        sy = y.sum()
        det = n * sxx - sx * sx
        alpha = (n * sxy - sx * sy) / det
        beta = (sxx * sy - sx * sxy) / det
    if alpha <= 0:
        raise AlignmentFailure(f"disparity scale {alpha} is not positive")
    return AlignmentParams(float(alpha), float(beta))


def apply_alignment(pred_depth: np.ndarray, params: AlignmentParams):
    """Corrected depth 1/(alpha/pred + beta), clamped into [D_MIN, D_MAX];
    invalid (0) pixels stay invalid. Returns (depth, clamp_count)."""
    if params.alpha <= 0:
        raise AlignmentFailure("alpha must be positive")
    d = np.asarray(pred_depth, dtype=np.float64)
    valid = d > 0
    out = np.zeros_like(d)
    if params.alpha == 1.0 and params.beta == 0.0:
        clipped = np.clip(d[valid], D_MIN, D_MAX)
        out[valid] = clipped
        return out.astype(np.float32), int((clipped != d[valid]).sum())
    disp = params.alpha / d[valid] + params.beta
    nonpos = disp <= 0
    corrected = np.where(nonpos, D_MAX, 1.0 / np.where(nonpos, 1.0, disp))
    clamped_low = corrected < D_MIN
    clamped_high = corrected > D_MAX
    out[valid] = np.clip(corrected, D_MIN, D_MAX)
    clamp_count = int(nonpos.sum() + clamped_low.sum() + (clamped_high & ~nonpos).sum())
    return out.astype(np.float32), clamp_count


def inpaint_depth(rendered_depth: np.ndarray, mask: np.ndarray, cfg: AlignConfig) -> np.ndarray:
    """Fill mask=0 pixels by solving the Laplace equation in disparity with the
    known disparities as Dirichlet data (red-black Gauss-Seidel sweeps)."""
    known = np.asarray(mask) > 0
    if not known.any():
        raise InpaintAnchorError("mask has no known pixels to anchor the fill")
    depth = np.asarray(rendered_depth, dtype=np.float64)
    if (depth[known] <= 0).any():
        raise DimensionMismatchError("rendered depth must be valid wherever mask=1")
    if known.all():
        return depth.astype(np.float32)

    h, w = depth.shape
    disp = np.zeros((h, w))
    disp[known] = 1.0 / depth[known]

    # seed each hole component with the mean of its own 4-adjacent anchoring
    # disparities, so every sweep keeps values inside that component's
    # boundary extrema (maximum principle at any iteration count)
    hole = ~known
    labels, n_comp = ndimage.label(hole)  # 4-connectivity, matching the stencil
    if n_comp:
        sums = np.zeros(n_comp + 1)
        cnts = np.zeros(n_comp + 1)
        kr, kc = np.nonzero(known)
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr = kr + dr
            cc = kc + dc
            ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
            lab = labels[rr[ok], cc[ok]]
            np.add.at(sums, lab, disp[kr[ok], kc[ok]])
            np.add.at(cnts, lab, 1.0)
        means = np.divide(sums, cnts, out=np.zeros_like(sums), where=cnts > 0)
        disp[hole] = means[labels[hole]]

    scale = float(np.abs(disp[known]).max())
    pad = np.pad(disp, 1)
    known_pad = np.pad(known, 1)
    hole_pad = np.pad(hole, 1, constant_values=False)
    inb = np.pad(np.ones((h, w), dtype=bool), 1, constant_values=False)

    rr, cc = np.nonzero(hole_pad)
    parity = (rr + cc) % 2
    groups = [(rr[parity == 0], cc[parity == 0]), (rr[parity == 1], cc[parity == 1])]

    for _ in range(cfg.inpaint_iters):
        max_delta = 0.0
        for gr, gc in groups:
            if len(gr) == 0:
                continue
            acc = np.zeros(len(gr))
            cnt = np.zeros(len(gr))
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                nr, nc = gr + dr, gc + dc
                ok = inb[nr, nc]
                acc[ok] += pad[nr[ok], nc[ok]]
                cnt[ok] += 1.0
            new = acc / np.maximum(cnt, 1.0)
            max_delta = max(max_delta, float(np.abs(new - pad[gr, gc]).max()))
            pad[gr, gc] = new
        if max_delta <= cfg.inpaint_tol * scale:
            break

    out = pad[1:-1, 1:-1]
    filled = np.where(known, depth, 1.0 / np.maximum(out, 1e-12))
    return filled.astype(np.float32)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(4.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def make_weight_map(mask: np.ndarray, sigma: float) -> np.ndarray:
    """Separable truncated-Gaussian blur (radius ceil(4*sigma)) of the binary
    mask with replicated edges, clamped to [0, 1]."""
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    k = _gaussian_kernel(sigma)
    m = (np.asarray(mask) > 0).astype(np.float64)
    blurred = ndimage.correlate1d(m, k, axis=0, mode="nearest")
    blurred = ndimage.correlate1d(blurred, k, axis=1, mode="nearest")
    return np.clip(blurred, 0.0, 1.0)


def align(pred_depth: np.ndarray, rendered_depth: np.ndarray, mask: np.ndarray,
          cfg: AlignConfig = AlignConfig()) -> AlignResult:
    """Full boundary-aware alignment: fit scale/shift on the hole boundary,
    correct the prediction, harmonically fill the rendered depth, and blend
    (in depth) with the blurred-visibility weight map."""
    pred = np.asarray(pred_depth)
    rendered = np.asarray(rendered_depth)
    m = np.asarray(mask)
    if not (pred.shape == rendered.shape == m.shape):
        raise DimensionMismatchError("alignment inputs must share dimensions")

    boundary = extract_boundary(m, cfg.dilation_radius)
    fallback = False
    try:
        params = solve_alignment(pred, rendered, boundary)
    except AlignmentFailure:
        params = AlignmentParams(1.0, 0.0)
        fallback = True
    corrected, clamp_count = apply_alignment(pred, params)

    if not (m > 0).any():
        return AlignResult(corrected, params, fallback, clamp_count)

    filled = inpaint_depth(rendered, m, cfg)
    weights = make_weight_map(m, cfg.blur_sigma)
    blended = weights * filled.astype(np.float64) + (1.0 - weights) * corrected.astype(np.float64)
    return AlignResult(blended.astype(np.float32), params, fallback, clamp_count)
