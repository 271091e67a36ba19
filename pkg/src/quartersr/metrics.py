"""Image quality metrics: PSNR and single-scale SSIM.

Both metrics assume 8-bit-range data (peak 255).  PSNR of identical
images returns ``math.inf`` rather than raising, which keeps report
aggregation simple.  SSIM follows the canonical single-scale definition
with an 11x11 Gaussian window (sigma 1.5) and covers every position
where the window fits entirely inside both images.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import convolve2d

from .errors import DimensionMismatchError

PEAK = 255.0


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Normalized 2-D Gaussian window (sums to 1)."""
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    window_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Mean structural similarity index over all valid window positions.

    The local statistics are Gaussian-weighted; C1 = (k1*255)^2 and
    C2 = (k2*255)^2.  Requires both images to be at least window-sized.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b)
    if a.shape[0] < window_size or a.shape[1] < window_size:
        raise DimensionMismatchError(
            f"images {a.shape} smaller than the {window_size}x{window_size} window"
        )

    win = gaussian_window(window_size, sigma)
    c1 = (k1 * PEAK) ** 2
    c2 = (k2 * PEAK) ** 2

    mu_a = convolve2d(a, win, mode="valid")
    mu_b = convolve2d(b, win, mode="valid")
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    var_a = convolve2d(a * a, win, mode="valid") - mu_aa
    var_b = convolve2d(b * b, win, mode="valid") - mu_bb
    cov_ab = convolve2d(a * b, win, mode="valid") - mu_ab

    ssim_map = ((2.0 * mu_ab + c1) * (2.0 * cov_ab + c2)) / (
        (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    )
    return float(ssim_map.mean())
