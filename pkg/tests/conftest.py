"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np

from splatvid.core import Density, GaussianField


def random_field(
    rng: np.random.Generator,
    lr_width: int,
    lr_height: int,
    density: Density = Density.ONE_PER_PIXEL,
    sigma_range: tuple[float, float] = (0.4, 2.0),
    rho_range: tuple[float, float] = (-0.7, 0.7),
    offset_range: tuple[float, float] = (0.05, 0.95),
    color_range: tuple[float, float] = (0.0, 1.0),
) -> GaussianField:
    gw, gh = density.grid_shape(lr_width, lr_height)
    n = gw * gh
    return GaussianField(
        lr_width=lr_width,
        lr_height=lr_height,
        density=density,
        offsets=rng.uniform(*offset_range, (n, 2)),
        sigmas=rng.uniform(*sigma_range, (n, 2)),
        rhos=rng.uniform(*rho_range, n),
        colors=rng.uniform(*color_range, (n, 3)),
    )


def fields_equal(a: GaussianField, b: GaussianField) -> bool:
    return (
        a.lr_width == b.lr_width
        and a.lr_height == b.lr_height
        and a.density is b.density
        and np.array_equal(a.offsets, b.offsets)
        and np.array_equal(a.sigmas, b.sigmas)
        and np.array_equal(a.rhos, b.rhos)
        and np.array_equal(a.colors, b.colors)
    )
