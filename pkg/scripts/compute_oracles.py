#!/usr/bin/env python3
"""Recompute the frozen high-precision reference constants used by the tests.

Run before trusting any change to the kernel evaluation or SSIM code paths.
The values printed here are derived with mpmath at 40-50 significant digits,
independently of the package implementation, and are hard-coded in
tests/test_raster.py and tests/test_metrics.py.
"""

import numpy as np
from mpmath import mp, mpf


def kernel_eval_oracle() -> None:
    """One-kernel weight at scale 1.5 under both normalization modes.

    Kernel: anchor (2,1), offset (0.25,0.75), covariance (1.2, 0.8, 0.3);
    query at output pixel coordinates (4, 3).
    """
    mp.dps = 50
    s = mpf("1.5")
    mux = (2 + mpf("0.5") + mpf("0.25")) * s
    muy = (1 + mpf("0.5") + mpf("0.75")) * s
    a, b, rho = s * mpf("1.2"), s * mpf("0.8"), mpf("0.3")
    det = a**2 * b**2 * (1 - rho**2)
    dx, dy = mpf(4) - mux, mpf(3) - muy
    ixx, iyy, ixy = b**2 / det, a**2 / det, -rho * a * b / det
    q = ixx * dx * dx + 2 * ixy * dx * dy + iyy * dy * dy
    print("kernel eval oracle:")
    print("  q              =", mp.nstr(q, 17))
    print("  w (det norm)   =", mp.nstr(mp.e ** (-q / 2) / (2 * mp.pi * det), 17))
    print("  w (sqrt norm)  =", mp.nstr(mp.e ** (-q / 2) / (2 * mp.pi * mp.sqrt(det)), 17))


def ssim_fixture_oracle() -> None:
    """Direct-formula SSIM of the shipped 16x16 fixture pair."""
    mp.dps = 40
    rng = np.random.default_rng(42)
    a = rng.uniform(0, 1, (16, 16, 3))
    b = np.clip(a + rng.normal(0, 0.05, (16, 16, 3)), 0, 1)
    wts = [mpf("0.299"), mpf("0.587"), mpf("0.114")]

    def luma(img):
        return [
            [sum(mpf(img[y, x, c]) * wts[c] for c in range(3)) for x in range(16)]
            for y in range(16)
        ]

    X, Y = luma(a), luma(b)
    ax = [mpf(i) - mpf(10) / 2 for i in range(11)]
    g = [mp.e ** (-((v / mpf("1.5")) ** 2) / 2) for v in ax]
    k = [[g[i] * g[j] for j in range(11)] for i in range(11)]
    ks = sum(sum(r) for r in k)
    k = [[v / ks for v in r] for r in k]
    c1, c2 = mpf("0.01") ** 2, mpf("0.03") ** 2
    vals = []
    for y0 in range(6):
        for x0 in range(6):
            mx = my = mxx = myy = mxy = mpf(0)
            for i in range(11):
                for j in range(11):
                    w = k[i][j]
                    xv, yv = X[y0 + i][x0 + j], Y[y0 + i][x0 + j]
                    mx += w * xv
                    my += w * yv
                    mxx += w * xv * xv
                    myy += w * yv * yv
                    mxy += w * xv * yv
            vx, vy, cxy = mxx - mx * mx, myy - my * my, mxy - mx * my
            vals.append(
                ((2 * mx * my + c1) * (2 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2))
            )
    print("ssim fixture oracle:")
    print("  ssim =", mp.nstr(sum(vals) / len(vals), 17))


if __name__ == "__main__":
    kernel_eval_oracle()
    ssim_fixture_oracle()
