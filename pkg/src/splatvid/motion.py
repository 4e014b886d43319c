"""Temporal evolution of kernel position and color.

Linear flow scaling, bilinear backward warping (clamp-to-edge), mask plus
residual feature fusion, parameter decoding, and the motion-adaptive offset
window that widens each cell's position range in proportion to local flow
magnitude.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from splatvid.core import Density, FeatureMap, FlowField, ShapeError, ValidationError
from splatvid.cpb import LogitField, ONE_HOT_LOGIT, softmax
from splatvid.nnops import conv2d, sigmoid


class FlowConvention(enum.Enum):
    # CONSISTENT satisfies the endpoint identities (warp at t=0 and t=1 is
    # the identity); PAPER_LITERAL keeps the printed subscript assignment
    # for fidelity audits.
    CONSISTENT = "consistent"
    PAPER_LITERAL = "paper"


@dataclass(frozen=True)
class WindowSet:
    """Ordered base window sizes; default {1, ..., 10} LR pixels."""

    sizes: tuple[float, ...] = tuple(float(i) for i in range(1, 11))

    def __post_init__(self):
        s = tuple(float(v) for v in self.sizes)
        if not s or any(v <= 0 for v in s) or any(b <= a for a, b in zip(s, s[1:])):
            raise ValidationError(f"window sizes must be positive and strictly increasing: {s}")
        object.__setattr__(self, "sizes", s)

    @property
    def k(self) -> int:
        return len(self.sizes)

    @property
    def max_size(self) -> float:
        return self.sizes[-1]


@dataclass(frozen=True)
class WindowMap:
    """Per-cell positive window size, bounded by the window set."""

    values: np.ndarray  # (grid_h, grid_w)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"window map shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise ValidationError("window map values must be finite and positive")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


class AnalyticBaseline:
    """Training-free fusion: mask = (1 - t) everywhere, residual = 0."""


class PassthroughMode:
    """Decode a 5-channel map verbatim: (dmu_x, dmu_y, r, g, b), clamped."""


@dataclass(frozen=True)
class FusionHeadWeights:
    """Conv mapping 2C feature channels -> 1 mask channel + C residuals."""

    weights: np.ndarray  # (1 + C, 2C, kh, kw)
    bias: np.ndarray  # (1 + C,)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        b = np.ascontiguousarray(self.bias, dtype=np.float64)
        if w.ndim != 4 or w.shape[0] != w.shape[1] // 2 + 1 or w.shape[1] % 2 != 0:
            raise ShapeError(f"fusion head weights shape {w.shape}")
        if w.shape[2] % 2 != 1 or w.shape[3] % 2 != 1:
            raise ShapeError("fusion head kernel size must be odd")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"fusion head bias shape {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("non-finite fusion head weights")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class DecoderWeights:
    """Conv mapping C feature channels -> (dmu_x, dmu_y, C_r, C_g, C_b)."""

    weights: np.ndarray  # (5, C, kh, kw)
    bias: np.ndarray  # (5,)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        b = np.ascontiguousarray(self.bias, dtype=np.float64)
        if w.ndim != 4 or w.shape[0] != 5:
            raise ShapeError(f"decoder weights shape {w.shape}")
        if w.shape[2] % 2 != 1 or w.shape[3] % 2 != 1:
            raise ShapeError("decoder kernel size must be odd")
        if b.shape != (5,):
            raise ShapeError(f"decoder bias shape {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("non-finite decoder weights")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


def scale_flows(
    m01: FlowField,
    m10: FlowField,
    t: float,
    convention: FlowConvention = FlowConvention.CONSISTENT,
) -> tuple[FlowField, FlowField]:
    """Linearly scale the endpoint flows to intermediate time t.

    Returns (m_t0, m_t1): flows pointing from time t back to frames 0 and 1.
    """
    if m01.vectors.shape != m10.vectors.shape:
        raise ShapeError("flow fields differ in shape")
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"t={t} outside [0, 1]")
    if convention is FlowConvention.CONSISTENT:
        return FlowField(t * m10.vectors), FlowField((1.0 - t) * m01.vectors)
    return FlowField((1.0 - t) * m01.vectors), FlowField(t * m10.vectors)


def backward_warp(f: FeatureMap, flow: FlowField) -> FeatureMap:
    """Bilinear backward warp: out(x, y) = f(x + dx, y + dy), clamp-to-edge."""
    if (f.height, f.width) != (flow.height, flow.width):
        raise ShapeError(
            f"feature map {f.height}x{f.width} vs flow {flow.height}x{flow.width}"
        )
    h, w = f.height, f.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = np.clip(xs + flow.vectors[:, :, 0], 0.0, w - 1.0)
    sy = np.clip(ys + flow.vectors[:, :, 1], 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = sx - x0
    wy = sy - y0
    d = f.data
    top = (1.0 - wx)[..., None] * d[y0, x0] + wx[..., None] * d[y0, x1]
    bot = (1.0 - wx)[..., None] * d[y1, x0] + wx[..., None] * d[y1, x1]
    return FeatureMap((1.0 - wy)[..., None] * top + wy[..., None] * bot)


def predict_fusion(
    f0t: FeatureMap,
    f1t: FeatureMap,
    t: float,
    w: FusionHeadWeights | AnalyticBaseline | None = None,
) -> tuple[FeatureMap, FeatureMap]:
    """Predict the fusion mask (1 channel, in [0,1]) and feature residual."""
    if f0t.data.shape != f1t.data.shape:
        raise ShapeError("warped endpoint features differ in shape")
    h, wd, c = f0t.data.shape
    if w is None or isinstance(w, AnalyticBaseline) or w is AnalyticBaseline:
        mask = np.full((h, wd, 1), 1.0 - t)
        residual = np.zeros((h, wd, c))
        return FeatureMap(mask), FeatureMap(residual)
    if w.weights.shape[1] != 2 * c or w.weights.shape[0] != 1 + c:
        raise ShapeError(
            f"fusion head expects 2*{c} in / {1 + c} out, got {w.weights.shape}"
        )
    x = np.concatenate([f0t.data, f1t.data], axis=2)
    out = conv2d(x, w.weights, w.bias)
    mask = sigmoid(out[:, :, 0:1])
    residual = out[:, :, 1:]
    return FeatureMap(mask), FeatureMap(residual)


def fuse_features(
    f0t: FeatureMap, f1t: FeatureMap, mask: FeatureMap, residual: FeatureMap
) -> FeatureMap:
    """F_t = mask * f0t + (1 - mask) * f1t + residual."""
    if f0t.data.shape != f1t.data.shape or f0t.data.shape != residual.data.shape:
        raise ShapeError("fuse_features: operand shapes differ")
    if mask.data.shape[:2] != f0t.data.shape[:2] or mask.channels != 1:
        raise ShapeError(f"mask shape {mask.data.shape}")
    m = mask.data
    if np.any(m < 0.0) or np.any(m > 1.0):
        raise ValidationError("mask values outside [0, 1]")
    return FeatureMap(m * f0t.data + (1.0 - m) * f1t.data + residual.data)


def decode_gaussians(
    f_t: FeatureMap, w: DecoderWeights | PassthroughMode | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Decode per-cell base offsets in [0,1] and colors in [0,1].

    Returns (offsets (H, W, 2), colors (H, W, 3)).
    """
    if w is None or isinstance(w, PassthroughMode) or w is PassthroughMode:
        if f_t.channels != 5:
            raise ShapeError(f"passthrough decode needs 5 channels, got {f_t.channels}")
        offsets = np.clip(f_t.data[:, :, 0:2], 0.0, 1.0)
        colors = np.clip(f_t.data[:, :, 2:5], 0.0, 1.0)
        return offsets, colors
    if w.weights.shape[1] != f_t.channels:
        raise ShapeError(
            f"decoder expects {w.weights.shape[1]} channels, got {f_t.channels}"
        )
    out = sigmoid(conv2d(f_t.data, w.weights, w.bias))
    return out[:, :, 0:2], out[:, :, 2:5]


def compute_window_map(v_logits: LogitField, s_win: WindowSet) -> WindowMap:
    """Softmax-weighted combination of base window sizes, per cell."""
    if v_logits.k != s_win.k:
        raise ShapeError(f"logit K={v_logits.k} != window set K={s_win.k}")
    weights = softmax(v_logits.logits, axis=-1)
    return WindowMap(weights @ np.asarray(s_win.sizes))


def flow_magnitude_window_logits(
    m01: FlowField,
    m10: FlowField,
    s_win: WindowSet,
    density: Density = Density.ONE_PER_PIXEL,
) -> LogitField:
    """Analytic window selector: one-hot on the smallest window covering the
    cell's peak flow magnitude (ceil-to-window rule, saturating at the max).
    """
    if m01.vectors.shape != m10.vectors.shape:
        raise ShapeError("flow fields differ in shape")
    mag = np.maximum(
        np.linalg.norm(m01.vectors, axis=2), np.linalg.norm(m10.vectors, axis=2)
    )
    h, w = mag.shape
    gw, gh = density.grid_shape(w, h)
    if density is Density.ONE_PER_FOUR_PIXELS:
        # Pool each 2x2 LR block by max (pad edges by replication).
        padded = np.pad(mag, ((0, 2 * gh - h), (0, 2 * gw - w)), mode="edge")
        mag = padded.reshape(gh, 2, gw, 2).max(axis=(1, 3))
    g = np.minimum(mag, s_win.max_size)
    sizes = np.asarray(s_win.sizes)
    idx = np.searchsorted(sizes, g, side="left")
    idx = np.minimum(idx, s_win.k - 1)
    logits = np.zeros((gh, gw, s_win.k))
    np.put_along_axis(logits, idx[..., None], ONE_HOT_LOGIT, axis=-1)
    return LogitField(logits)


def apply_window(offsets: np.ndarray, w: WindowMap) -> np.ndarray:
    """Scale per-cell offset vectors by the window map (same factor for x, y)."""
    offsets = np.asarray(offsets, dtype=np.float64)
    if offsets.shape[:2] != w.values.shape or offsets.shape[2] != 2:
        raise ShapeError(f"offsets {offsets.shape} vs window map {w.values.shape}")
    return offsets * w.values[..., None]
