"""Recover a GaussianField from a target image by Adam on the render loss.

Optimization runs in an unconstrained reparameterization so every iterate
maps to a valid field by construction:

    offset = sigmoid(u)            in [0, 1]
    sigma  = softplus(a) + 1e-3    positive
    rho    = rho_max * tanh(r)     in (-1, 1)
    color  = sigmoid(c)            in [0, 1]

The analytic gradients differentiate the kernel weight of the rasterizer in
closed form and are validated against central finite differences.  Fitting
renders with clamping off (clamping kills gradients in saturated regions)
and, by default, with a wide truncation radius so the truncated loss is
smooth to within ~1e-14 of the dense one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from splatvid.core import (
    Density,
    FrameBuffer,
    GaussianField,
    RHO_MAX,
    SIGMA_MIN,
    ShapeError,
)
from splatvid.metrics import LUMA_WEIGHTS
from splatvid.raster import Normalization, RenderConfig, render_windows

INIT_SIGMA = 0.7
INIT_OFFSET = 0.5

# Parameter layout per kernel in a ParamVector row.
PARAM_COLS = ("u_x", "u_y", "a_x", "a_y", "r_raw", "c_r", "c_g", "c_b")


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 500
    learning_rate: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    freq_loss_weight: float = 0.05
    # None -> 1 for OnePerPixel, 2 for OnePerFourPixels.
    scale: float | None = None
    normalization: Normalization = Normalization.PAPER_DET
    truncation_radius: float = 8.0
    # The frequency term is reported but excluded from gradients unless set.
    freq_in_gradient: bool = False

    def validate(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        for name in ("learning_rate", "adam_beta1", "adam_beta2", "adam_eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.freq_loss_weight < 0:
            raise ValueError("freq_loss_weight must be non-negative")

    def effective_scale(self, density: Density) -> float:
        if self.scale is not None:
            return self.scale
        return 2.0 if density is Density.ONE_PER_FOUR_PIXELS else 1.0

    def render_config(self, density: Density) -> RenderConfig:
        return RenderConfig(
            scale=self.effective_scale(density),
            truncation_radius=self.truncation_radius,
            normalization=self.normalization,
            clamp_output=False,
        )


def _inv_softplus(y: np.ndarray) -> np.ndarray:
    # Inverse of log(1 + exp(x)), stable for y not too small.
    y = np.maximum(y, 1e-9)
    return y + np.log1p(-np.exp(-y))


def _logit(p: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    p = np.clip(p, eps, 1.0 - eps)
    return np.log(p) - np.log1p(-p)


@dataclass(frozen=True)
class ParamVector:
    """Unconstrained per-kernel parameters, shape (N, 8).

    Columns: (u_x, u_y, a_x, a_y, r_raw, c_r, c_g, c_b).
    """

    raw: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.raw, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 8:
            raise ShapeError(f"param vector shape {arr.shape}")
        object.__setattr__(self, "raw", arr)

    @staticmethod
    def from_field(f: GaussianField) -> "ParamVector":
        raw = np.empty((f.n_gaussians, 8), dtype=np.float64)
        raw[:, 0:2] = _logit(f.offsets)
        raw[:, 2:4] = _inv_softplus(f.sigmas - SIGMA_MIN)
        raw[:, 4] = np.arctanh(np.clip(f.rhos / RHO_MAX, -1 + 1e-12, 1 - 1e-12))
        raw[:, 5:8] = _logit(f.colors)
        return ParamVector(raw)

    def to_field(self, template: GaussianField) -> GaussianField:
        raw = self.raw
        return template.replace(
            offsets=1.0 / (1.0 + np.exp(-raw[:, 0:2])),
            sigmas=np.logaddexp(0.0, raw[:, 2:4]) + SIGMA_MIN,
            rhos=RHO_MAX * np.tanh(raw[:, 4]),
            colors=1.0 / (1.0 + np.exp(-raw[:, 5:8])),
        )


def _block_pool(img: np.ndarray, gh: int, gw: int) -> np.ndarray:
    """(gh*k, gw*k, 3)-ish image -> (gh*gw, 3) block means, edge-padded."""
    h, w = img.shape[:2]
    bh = -(-h // gh)
    bw = -(-w // gw)
    pad = np.pad(img, ((0, gh * bh - h), (0, gw * bw - w), (0, 0)), mode="edge")
    return pad.reshape(gh, bh, gw, bw, 3).mean(axis=(1, 3)).reshape(gh * gw, 3)


def init_field(
    target: FrameBuffer,
    density: Density,
    render_config: RenderConfig | None = None,
) -> GaussianField:
    """Deterministic start: centered kernels, sigma 0.7, target-sampled color.

    Overlapping kernels sum, so a raw target color would start the render
    roughly 2x too bright; when a render config is given, colors are divided
    by the per-cell gain of the unit-color init geometry.  That single
    correction is worth hundreds of descent iterations.
    """
    lr_w, lr_h = target.width, target.height
    gw, gh = density.grid_shape(lr_w, lr_h)
    n = gw * gh
    if density is Density.ONE_PER_PIXEL:
        colors = target.pixels.reshape(n, 3)
    else:
        pad = np.pad(
            target.pixels, ((0, 2 * gh - lr_h), (0, 2 * gw - lr_w), (0, 0)), mode="edge"
        )
        colors = pad.reshape(gh, 2, gw, 2, 3).mean(axis=(1, 3)).reshape(n, 3)
    f = GaussianField(
        lr_width=lr_w,
        lr_height=lr_h,
        density=density,
        offsets=np.full((n, 2), INIT_OFFSET),
        sigmas=np.full((n, 2), INIT_SIGMA),
        rhos=np.zeros(n),
        colors=colors,
    )
    if render_config is None:
        return f
    gain = render_windows(f.replace(colors=np.ones((n, 3))), render_config).pixels
    pooled = _block_pool(np.maximum(gain, 1e-6), gh, gw)
    return f.replace(colors=np.clip(colors / pooled, 0.0, 1.0))


def _luma_spectrum(img: np.ndarray) -> np.ndarray:
    return np.abs(np.fft.fft2(img @ LUMA_WEIGHTS))


def loss(
    f: GaussianField, target: FrameBuffer, cfg: FitConfig
) -> tuple[float, float, float]:
    """(total, l1, freq): L1 on pixels plus weighted spectral-magnitude L1."""
    cfg.validate()
    rendered = render_windows(f, cfg.render_config(f.density)).pixels
    if rendered.shape != target.pixels.shape:
        raise ShapeError(
            f"rendered {rendered.shape} vs target {target.pixels.shape}"
        )
    l1 = float(np.mean(np.abs(rendered - target.pixels)))
    freq = float(np.mean(np.abs(_luma_spectrum(rendered) - _luma_spectrum(target.pixels))))
    return l1 + cfg.freq_loss_weight * freq, l1, freq


def _pixel_weight_l1(rendered: np.ndarray, target: np.ndarray) -> np.ndarray:
    """dL1/d(rendered): sign of the residual, subgradient 0 at exact zero."""
    return np.sign(rendered - target) / rendered.size


def _pixel_weight_freq(rendered: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Gradient of the spectral-magnitude L1 with respect to rendered pixels."""
    a = np.fft.fft2(rendered @ LUMA_WEIGHTS)
    bmag = _luma_spectrum(target)
    amag = np.abs(a)
    s = np.sign(amag - bmag)
    with np.errstate(invalid="ignore", divide="ignore"):
        phase = np.where(amag > 0, np.conj(a) / amag, 0.0)
    dy = np.real(np.fft.fft2(s * phase)) / a.size
    return dy[..., None] * LUMA_WEIGHTS


def _field_gradient(
    f: GaussianField, pixel_weight: np.ndarray, cfg: FitConfig
) -> np.ndarray:
    """(N, 8) unconstrained-space gradient given dL/d(rendered pixel).

    Accumulates per kernel over its truncation window only; with the default
    radius of 8 that is indistinguishable from a dense sum.
    """
    rcfg = cfg.render_config(f.density)
    s = rcfg.scale
    out_h, out_w = pixel_weight.shape[:2]
    mu = f.mu() * s
    a = s * f.sigmas[:, 0]
    b = s * f.sigmas[:, 1]
    rho = f.rhos
    one_m_r2 = 1.0 - rho**2
    det = a**2 * b**2 * one_m_r2
    norm = det if cfg.normalization is Normalization.PAPER_DET else np.sqrt(det)
    amp = 1.0 / (2.0 * np.pi * norm)
    det_power = 1.0 if cfg.normalization is Normalization.PAPER_DET else 0.5
    ixx = b**2 / det
    iyy = a**2 / det
    ixy = -rho * a * b / det

    r = rcfg.truncation_radius
    r2 = r * r
    n = mu.shape[0]
    grad = np.zeros((n, 8), dtype=np.float64)
    colors = f.colors

    hw_x = np.ceil(r * a + 1.0).astype(np.int64)
    hw_y = np.ceil(r * b + 1.0).astype(np.int64)
    # Same windowing as raster.render_windows: width capped at the image,
    # start clamped so the in-image part of the box is always covered.
    wx_all = np.minimum(2 * hw_x + 1, out_w)
    wy_all = np.minimum(2 * hw_y + 1, out_h)
    # Bucket kernels by window size so each bucket is one broadcasted pass.
    keys = wx_all * 100000 + wy_all
    for key in np.unique(keys):
        gi = np.nonzero(keys == key)[0]
        wx = int(wx_all[gi[0]])
        wy = int(wy_all[gi[0]])
        sx = np.clip(np.floor(mu[gi, 0]).astype(np.int64) - hw_x[gi], 0, out_w - wx)
        sy = np.clip(np.floor(mu[gi, 1]).astype(np.int64) - hw_y[gi], 0, out_h - wy)
        px = sx[:, None] + np.arange(wx)[None, :]  # (G, Wx)
        py = sy[:, None] + np.arange(wy)[None, :]  # (G, Wy)
        dx = (px + 0.5) - mu[gi, 0][:, None]  # (G, Wx)
        dy = (py + 0.5) - mu[gi, 1][:, None]  # (G, Wy)
        q = (
            ixx[gi, None, None] * (dx**2)[:, None, :]
            + 2.0 * ixy[gi, None, None] * dy[:, :, None] * dx[:, None, :]
            + iyy[gi, None, None] * (dy**2)[:, :, None]
        )  # (G, Wy, Wx)
        w = np.where(q <= r2, amp[gi, None, None] * np.exp(-0.5 * q), 0.0)
        sw = pixel_weight[py[:, :, None], px[:, None, :], :]  # (G, Wy, Wx, 3)

        # Color gradient: dL/dc_ch = sum_p S_p,ch * w_p.
        grad[gi, 5:8] = np.einsum("gyx,gyxc->gc", w, sw)
        # Shared scalar: T_p = sum_ch S_p,ch * c_ch, then tw = T * w.
        t = np.einsum("gyxc,gc->gyx", sw, colors[gi])
        tw = t * w
        # Position: dw/dmu = w * s * (Sinv d); d here is (dx, dy) broadcast.
        sid_x = ixx[gi, None, None] * dx[:, None, :] + ixy[gi, None, None] * dy[:, :, None]
        sid_y = ixy[gi, None, None] * dx[:, None, :] + iyy[gi, None, None] * dy[:, :, None]
        grad[gi, 0] = s * np.einsum("gyx,gyx->g", tw, sid_x)
        grad[gi, 1] = s * np.einsum("gyx,gyx->g", tw, sid_y)
        # Scale/correlation terms via u = dx/a, v = dy/b.
        u = dx / a[gi, None]
        v = dy / b[gi, None]
        uv = v[:, :, None] * u[:, None, :]
        u2 = (u**2)[:, None, :]
        v2 = (v**2)[:, :, None]
        inv = 1.0 / one_m_r2[gi, None, None]
        # d q / d a and d ln(amp) / d a (chain through a = s * sigma_x).
        dq_da = inv * (-2.0 * u2 + 2.0 * rho[gi, None, None] * uv) / a[gi, None, None]
        dq_db = inv * (-2.0 * v2 + 2.0 * rho[gi, None, None] * uv) / b[gi, None, None]
        dlna_da = -2.0 * det_power / a[gi]
        dlna_db = -2.0 * det_power / b[gi]
        grad[gi, 2] = s * (
            dlna_da * np.einsum("gyx->g", tw)
            - 0.5 * np.einsum("gyx,gyx->g", tw, dq_da)
        )
        grad[gi, 3] = s * (
            dlna_db * np.einsum("gyx->g", tw)
            - 0.5 * np.einsum("gyx,gyx->g", tw, dq_db)
        )
        dq_dr = 2.0 * (rho[gi, None, None] * (u2 + v2) - (1.0 + rho[gi, None, None] ** 2) * uv) * inv**2
        dlna_dr = 2.0 * det_power * rho[gi] / one_m_r2[gi]
        grad[gi, 4] = dlna_dr * np.einsum("gyx->g", tw) - 0.5 * np.einsum(
            "gyx,gyx->g", tw, dq_dr
        )

    # Chain through the reparameterization, using constrained values directly.
    offs = f.offsets
    grad[:, 0:2] *= offs * (1.0 - offs)
    grad[:, 2:4] *= 1.0 - np.exp(-(f.sigmas - SIGMA_MIN))
    grad[:, 4] *= RHO_MAX * (1.0 - (f.rhos / RHO_MAX) ** 2)
    grad[:, 5:8] *= colors * (1.0 - colors)
    return grad


def gradients(f: GaussianField, target: FrameBuffer, cfg: FitConfig) -> np.ndarray:
    """(N, 8) gradient of the L1 term w.r.t. the unconstrained parameters."""
    cfg.validate()
    rendered = render_windows(f, cfg.render_config(f.density)).pixels
    if rendered.shape != target.pixels.shape:
        raise ShapeError(f"rendered {rendered.shape} vs target {target.pixels.shape}")
    return _field_gradient(f, _pixel_weight_l1(rendered, target.pixels), cfg)


def fit_frame(
    target: FrameBuffer, density: Density, cfg: FitConfig
) -> tuple[GaussianField, list[float]]:
    """Adam descent from the deterministic init; returns (field, loss trace)."""
    cfg.validate()
    scale = cfg.effective_scale(density)
    if scale == 1.0:
        lr_frame = target
    else:
        # Target lives at the fitting scale; initialize from its block mean.
        step = int(round(scale))
        h = (target.height // step) * step
        w = (target.width // step) * step
        small = target.pixels[:h, :w].reshape(
            h // step, step, w // step, step, 3
        ).mean(axis=(1, 3))
        lr_frame = FrameBuffer(small)
    field = init_field(lr_frame, density, cfg.render_config(density))
    if cfg.iterations == 0:
        return field, []

    params = ParamVector.from_field(field)
    theta = params.raw.copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    trace: list[float] = []
    rcfg = cfg.render_config(density)
    for it in range(1, cfg.iterations + 1):
        field = ParamVector(theta).to_field(field)
        rendered = render_windows(field, rcfg).pixels
        weight = _pixel_weight_l1(rendered, target.pixels)
        if cfg.freq_in_gradient and cfg.freq_loss_weight > 0:
            weight = weight + cfg.freq_loss_weight * _pixel_weight_freq(
                rendered, target.pixels
            )
        g = _field_gradient(field, weight, cfg)
        m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g
        v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g * g
        m_hat = m / (1.0 - cfg.adam_beta1**it)
        v_hat = v / (1.0 - cfg.adam_beta2**it)
        theta = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        field = ParamVector(theta).to_field(field)
        trace.append(loss(field, target, cfg)[0])
    return field, trace
