"""Rasterize a GaussianField to a FrameBuffer at arbitrary spatial scale.

Two paths with identical contracts:
  * render_dense  - brute force, every kernel against every pixel (oracle);
  * render_tiled  - 16x16 output tiles with per-tile kernel bins built from
    axis-aligned bounding boxes of the truncation ellipse; kernels only
    contribute within Mahalanobis distance <= truncation_radius.

The kernel weight is w = 1/(2*pi*N) * exp(-0.5 * d^T S^-1 d) where S is the
scale-adjusted covariance and N is either det(S) (PAPER_DET, the default) or
sqrt(det(S)) (SQRT_DET, the standard bivariate normal constant).

Accumulation is in 64-bit floats; clamping (when enabled) happens exactly
once at the end, never mid-accumulation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from splatvid.core import (
    CovParams,
    Density,
    FrameBuffer,
    Gaussian2D,
    GaussianField,
    ValidationError,
)

TILE = 16


class Normalization(enum.Enum):
    PAPER_DET = "paper-det"
    SQRT_DET = "sqrt-det"


@dataclass(frozen=True)
class RenderConfig:
    scale: float
    truncation_radius: float = 3.0
    normalization: Normalization = Normalization.PAPER_DET
    clamp_output: bool = True

    def validate(self, density: Density = Density.ONE_PER_PIXEL) -> None:
        if self.scale < density.min_scale():
            raise ValidationError(
                f"scale {self.scale} below floor {density.min_scale()} for {density.name}"
            )
        if self.truncation_radius < 1.0:
            raise ValidationError(f"truncation_radius {self.truncation_radius} < 1")


def scale_covariance(p: CovParams, s: float) -> CovParams:
    """Scale-adjusted covariance params: (s*sx, s*sy, rho)."""
    p.validate()
    if s <= 0:
        raise ValidationError(f"scale {s} must be positive")
    return CovParams(s * p.sigma_x, s * p.sigma_y, p.rho)


def output_shape(lr_width: int, lr_height: int, scale: float) -> tuple[int, int]:
    """(out_w, out_h) = round(s * LR dims)."""
    return int(round(scale * lr_width)), int(round(scale * lr_height))


def _kernel_terms(sigmas, rhos, scale, normalization):
    """Per-kernel inverse-covariance components and prefactor at render scale.

    Returns (ixx, ixy, iyy, amp) where q = ixx*dx^2 + 2*ixy*dx*dy + iyy*dy^2
    and the contribution is amp * exp(-q/2).
    """
    a = scale * sigmas[:, 0]
    b = scale * sigmas[:, 1]
    det = a**2 * b**2 * (1.0 - rhos**2)
    ixx = b**2 / det
    iyy = a**2 / det
    ixy = -rhos * a * b / det
    norm = det if normalization is Normalization.PAPER_DET else np.sqrt(det)
    amp = 1.0 / (2.0 * np.pi * norm)
    return ixx, ixy, iyy, amp


def eval_gaussian(
    g: Gaussian2D,
    x: float,
    y: float,
    cfg: RenderConfig,
    density: Density = Density.ONE_PER_PIXEL,
) -> np.ndarray:
    """RGB contribution of one kernel at output-pixel coordinates (x, y)."""
    g.validate(max_offset=np.inf)
    cfg.validate(density)
    mu = g.center(density) * cfg.scale
    sigmas = np.array([[g.cov.sigma_x, g.cov.sigma_y]])
    rhos = np.array([g.cov.rho])
    ixx, ixy, iyy, amp = _kernel_terms(sigmas, rhos, cfg.scale, cfg.normalization)
    dx, dy = x - mu[0], y - mu[1]
    q = ixx[0] * dx * dx + 2.0 * ixy[0] * dx * dy + iyy[0] * dy * dy
    return np.asarray(g.color, dtype=np.float64) * (amp[0] * np.exp(-0.5 * q))


def _prepare(f: GaussianField, cfg: RenderConfig):
    cfg.validate(f.density)
    mu = f.mu() * cfg.scale  # kernel centers in output pixel coordinates
    ixx, ixy, iyy, amp = _kernel_terms(f.sigmas, f.rhos, cfg.scale, cfg.normalization)
    out_w, out_h = output_shape(f.lr_width, f.lr_height, cfg.scale)
    return mu, ixx, ixy, iyy, amp, out_w, out_h


def render_dense(f: GaussianField, cfg: RenderConfig) -> FrameBuffer:
    """Sum every kernel at every output pixel center; no truncation."""
    mu, ixx, ixy, iyy, amp, out_w, out_h = _prepare(f, cfg)
    xs = np.arange(out_w) + 0.5
    ys = np.arange(out_h) + 0.5
    px, py = np.meshgrid(xs, ys)  # (H, W)
    px, py = px.ravel(), py.ravel()
    npix = px.size
    acc = np.zeros((npix, 3), dtype=np.float64)
    n = mu.shape[0]
    chunk = max(1, int(4e6 // max(npix, 1)))
    for i0 in range(0, n, chunk):
        i1 = min(n, i0 + chunk)
        dx = px[None, :] - mu[i0:i1, 0:1]
        dy = py[None, :] - mu[i0:i1, 1:2]
        q = (
            ixx[i0:i1, None] * dx * dx
            + 2.0 * ixy[i0:i1, None] * dx * dy
            + iyy[i0:i1, None] * dy * dy
        )
        w = amp[i0:i1, None] * np.exp(-0.5 * q)  # (chunk, npix)
        acc += w.T @ f.colors[i0:i1]
    img = acc.reshape(out_h, out_w, 3)
    if cfg.clamp_output:
        img = np.clip(img, 0.0, 1.0)
    return FrameBuffer(img)


def _bin_tiles(mu, hx, hy, out_w, out_h):
    """Per-tile kernel index lists from conservative axis-aligned boxes.

    Returns (tile_order, tile_starts, ntx) where tile_order is a flat array
    of kernel indices sorted by tile id and tile_starts gives slice bounds
    per tile id (searchsorted style).
    """
    ntx = (out_w + TILE - 1) // TILE
    nty = (out_h + TILE - 1) // TILE
    tx0 = np.clip(np.floor((mu[:, 0] - hx) / TILE).astype(np.int64), 0, ntx - 1)
    tx1 = np.clip(np.floor((mu[:, 0] + hx) / TILE).astype(np.int64), 0, ntx - 1)
    ty0 = np.clip(np.floor((mu[:, 1] - hy) / TILE).astype(np.int64), 0, nty - 1)
    ty1 = np.clip(np.floor((mu[:, 1] + hy) / TILE).astype(np.int64), 0, nty - 1)
    nx = tx1 - tx0 + 1
    ny = ty1 - ty0 + 1
    pairs_g = []
    pairs_t = []
    # Enumerate (kernel, tile) pairs one box-offset at a time: boxes are a
    # handful of tiles wide, so this loop count stays tiny.
    for ox in range(int(nx.max())):
        selx = nx > ox
        for oy in range(int(ny.max())):
            sel = selx & (ny > oy)
            if not np.any(sel):
                continue
            g_idx = np.nonzero(sel)[0]
            t_idx = (ty0[g_idx] + oy) * ntx + (tx0[g_idx] + ox)
            pairs_g.append(g_idx)
            pairs_t.append(t_idx)
    if not pairs_g:
        return np.empty(0, np.int64), np.zeros(ntx * nty + 1, np.int64), ntx
    g_all = np.concatenate(pairs_g)
    t_all = np.concatenate(pairs_t)
    order = np.argsort(t_all, kind="stable")
    g_all = g_all[order]
    t_all = t_all[order]
    starts = np.searchsorted(t_all, np.arange(ntx * nty + 1))
    return g_all, starts, ntx


def render_tiled(f: GaussianField, cfg: RenderConfig) -> FrameBuffer:
    """Tile-binned fast path; matches render_dense within truncation error."""
    mu, ixx, ixy, iyy, amp, out_w, out_h = _prepare(f, cfg)
    r = cfg.truncation_radius
    # Exact axis-aligned extents of the truncation ellipse {q <= r^2}.
    hx = r * cfg.scale * f.sigmas[:, 0]
    hy = r * cfg.scale * f.sigmas[:, 1]
    g_by_tile, starts, ntx = _bin_tiles(mu, hx, hy, out_w, out_h)
    img = np.zeros((out_h, out_w, 3), dtype=np.float64)
    r2 = r * r
    colors = f.colors
    n_tiles = starts.size - 1
    for t in range(n_tiles):
        lo, hi = starts[t], starts[t + 1]
        if lo == hi:
            continue
        gi = g_by_tile[lo:hi]
        x0 = (t % ntx) * TILE
        y0 = (t // ntx) * TILE
        x1 = min(x0 + TILE, out_w)
        y1 = min(y0 + TILE, out_h)
        xs = np.arange(x0, x1) + 0.5
        ys = np.arange(y0, y1) + 0.5
        dx = xs[None, None, :] - mu[gi, 0][:, None, None]  # (G, th, tw)
        dy = ys[None, :, None] - mu[gi, 1][:, None, None]
        q = (
            ixx[gi, None, None] * dx * dx
            + 2.0 * ixy[gi, None, None] * dx * dy
            + iyy[gi, None, None] * dy * dy
        )
        w = np.where(q <= r2, amp[gi, None, None] * np.exp(-0.5 * q), 0.0)
        img[y0:y1, x0:x1, :] += np.einsum("ghw,gc->hwc", w, colors[gi])
    if cfg.clamp_output:
        img = np.clip(img, 0.0, 1.0)
    return FrameBuffer(img)


def render_windows(f: GaussianField, cfg: RenderConfig) -> FrameBuffer:
    """Per-kernel window accumulation; same contract as render_tiled.

    Kernels are bucketed by truncation-window size so each bucket is one
    broadcasted evaluation, scattered into the image with bincount.  This
    trades the per-tile loop for a handful of large array ops, which is much
    faster when kernels vastly outnumber tiles (the fitting regime).
    """
    mu, ixx, ixy, iyy, amp, out_w, out_h = _prepare(f, cfg)
    r = cfg.truncation_radius
    r2 = r * r
    colors = f.colors
    img = np.zeros(out_h * out_w * 3, dtype=np.float64)
    hx_all = np.ceil(r * cfg.scale * f.sigmas[:, 0] + 1.0).astype(np.int64)
    hy_all = np.ceil(r * cfg.scale * f.sigmas[:, 1] + 1.0).astype(np.int64)
    # Window width capped at the image size; the start is then clamped so the
    # window always covers the in-image part of the truncation box, even for
    # kernels whose center lies outside the frame.
    wx_all = np.minimum(2 * hx_all + 1, out_w)
    wy_all = np.minimum(2 * hy_all + 1, out_h)
    keys = wx_all * 100000 + wy_all
    for key in np.unique(keys):
        gi = np.nonzero(keys == key)[0]
        wx = int(wx_all[gi[0]])
        wy = int(wy_all[gi[0]])
        sx = np.clip(
            np.floor(mu[gi, 0]).astype(np.int64) - hx_all[gi], 0, out_w - wx
        )
        sy = np.clip(
            np.floor(mu[gi, 1]).astype(np.int64) - hy_all[gi], 0, out_h - wy
        )
        px = sx[:, None] + np.arange(wx)[None, :]  # (G, Wx)
        py = sy[:, None] + np.arange(wy)[None, :]  # (G, Wy)
        dx = (px + 0.5) - mu[gi, 0][:, None]
        dy = (py + 0.5) - mu[gi, 1][:, None]
        q = (
            ixx[gi, None, None] * (dx**2)[:, None, :]
            + 2.0 * ixy[gi, None, None] * dy[:, :, None] * dx[:, None, :]
            + iyy[gi, None, None] * (dy**2)[:, :, None]
        )
        w = np.where(q <= r2, amp[gi, None, None] * np.exp(-0.5 * q), 0.0)
        flat = (py[:, :, None] * out_w + px[:, None, :]).ravel()
        for c in range(3):
            img[c::3] += np.bincount(
                flat,
                weights=(w * colors[gi, c, None, None]).ravel(),
                minlength=out_h * out_w,
            )
    img = img.reshape(out_h, out_w, 3)
    if cfg.clamp_output:
        img = np.clip(img, 0.0, 1.0)
    return FrameBuffer(img)
