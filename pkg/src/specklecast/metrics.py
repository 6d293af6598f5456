"""Image quality metrics on the 8-bit scale.

Inputs are fields in [0, 1]; internally both are scaled by 255 so RMSE
comes out in 8-bit units and PSNR follows ``20*log10(255/rmse)``.
PSNR is capped at 100 dB once RMSE drops below ``255e-5`` (identical
images would otherwise be infinite).  SSIM uses a sliding 8x8 uniform
window with the standard stabilizers ``k1=0.01, k2=0.03, L=255``.
"""

from __future__ import annotations

import numpy as np

from .grids import as_field

__all__ = ["rmse", "psnr", "ssim", "PSNR_CAP_DB"]

PSNR_CAP_DB = 100.0
_CAP_RMSE = 255.0 * 1e-5


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    fa = as_field(a, name="first image")
    fb = as_field(b, name="second image")
    if fa.shape != fb.shape:
        raise ValueError(f"image dimensions differ: {fa.shape} vs {fb.shape}")
    return fa, fb


def rmse(a, b) -> float:
    """Root mean squared error in 8-bit units: ``sqrt(mean((255a - 255b)^2))``."""
    fa, fb = _pair(a, b)
    diff = 255.0 * (fa - fb)
    return float(np.sqrt(np.mean(diff * diff)))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB against the 255 peak, capped at 100."""
    r = rmse(a, b)
    if r < _CAP_RMSE:
        return PSNR_CAP_DB
    return float(20.0 * np.log10(255.0 / r))


def _box_sums(a: np.ndarray, win: int) -> np.ndarray:
    """Sums over every ``win x win`` window (valid positions only)."""
    c = np.cumsum(np.cumsum(a, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    return (
        c[win:, win:] - c[:-win, win:] - c[win:, :-win] + c[:-win, :-win]
    )


def ssim(a, b, window: int = 8, k1: float = 0.01, k2: float = 0.03, peak: float = 255.0) -> float:
    """Mean structural similarity over all sliding ``window``-sized patches.

    Per window: luminance/contrast/structure product

        ((2*mu_a*mu_b + C1) * (2*cov + C2)) /
        ((mu_a^2 + mu_b^2 + C1) * (var_a + var_b + C2))

    with biased (1/n) moments, C1 = (k1*peak)^2, C2 = (k2*peak)^2.
    Identical images score exactly 1.
    """
    fa, fb = _pair(a, b)
    if fa.shape[0] < window or fa.shape[1] < window:
        raise ValueError(f"images must be at least {window}x{window} for SSIM, got {fa.shape}")
    x = 255.0 * fa
    y = 255.0 * fb
    n = float(window * window)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2

    mu_x = _box_sums(x, window) / n
    mu_y = _box_sums(y, window) / n
    var_x = _box_sums(x * x, window) / n - mu_x * mu_x
    var_y = _box_sums(y * y, window) / n - mu_y * mu_y
    cov = _box_sums(x * y, window) / n - mu_x * mu_y

    score = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    )
    return float(np.mean(score))
