"""Spatio-temporal 2D Gaussian splatting video engine.

Represents video frames as grids of anisotropic 2D Gaussian kernels,
evolves them continuously in time (covariance bank resampling, flow-guided
position/color transport, motion-adaptive offset windows), and rasterizes
at arbitrary spatial scale and arbitrary timestamps.
"""

from splatvid.core import (
    CovParams,
    Density,
    FeatureMap,
    FlowField,
    FrameBuffer,
    Gaussian2D,
    GaussianField,
    ValidationError,
    cov_det,
    cov_inverse,
    cov_matrix,
    validate_field,
)
from splatvid.fit import FitConfig, fit_frame
from splatvid.metrics import psnr_y, ssim_y
from splatvid.pipeline import PipelineOptions, interpolate
from splatvid.raster import Normalization, RenderConfig, render_dense, render_tiled

__all__ = [
    "CovParams",
    "Density",
    "FeatureMap",
    "FitConfig",
    "FlowField",
    "FrameBuffer",
    "Gaussian2D",
    "GaussianField",
    "Normalization",
    "PipelineOptions",
    "RenderConfig",
    "ValidationError",
    "cov_det",
    "cov_inverse",
    "cov_matrix",
    "fit_frame",
    "interpolate",
    "psnr_y",
    "render_dense",
    "render_tiled",
    "ssim_y",
    "validate_field",
]

__version__ = "0.1.0"
