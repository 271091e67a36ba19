"""Shared helpers: slow reference implementations and procedural images.

The reference metrics here are deliberately naive (explicit loops over
window positions) so the fast implementations have something independent
to be checked against.
"""

import math

import numpy as np


def brute_psnr(a, b):
    """Peak signal-to-noise ratio computed with a scalar loop."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    total = 0.0
    for x, y in zip(a.tolist(), b.tolist()):
        total += (x - y) ** 2
    if total == 0.0:
        return math.inf
    mse = total / a.size
    return 10.0 * math.log10(255.0**2 / mse)


def brute_ssim(a, b, window=11, sigma=1.5):
    """Mean structural similarity from per-window statistics.

    Walks every valid window position and evaluates the textbook
    luminance/contrast/structure product with Gaussian weights.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    half = window // 2
    coords = np.arange(window) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    w /= w.sum()
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    h, wid = a.shape
    values = []
    for y in range(h - window + 1):
        for x in range(wid - window + 1):
            pa = a[y : y + window, x : x + window]
            pb = b[y : y + window, x : x + window]
            mu_a = float((w * pa).sum())
            mu_b = float((w * pb).sum())
            var_a = float((w * pa * pa).sum()) - mu_a * mu_a
            var_b = float((w * pb * pb).sum()) - mu_b * mu_b
            cov = float((w * pa * pb).sum()) - mu_a * mu_b
            num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
            den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
            values.append(num / den)
    return float(np.mean(values))


def synthetic_scene(rng, height, width):
    """A smooth test image with edges: gradient + Gaussian bumps + bars.

    Gives reconstruction and training something richer than noise while
    staying fully reproducible from the supplied generator.
    """
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    img = 60.0 + 60.0 * xx / max(width - 1, 1) + 40.0 * yy / max(height - 1, 1)
    for _ in range(4):
        cy = rng.uniform(0, height)
        cx = rng.uniform(0, width)
        amp = rng.uniform(-70.0, 70.0)
        s = rng.uniform(3.0, 10.0)
        img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    for _ in range(2):
        y0 = int(rng.integers(0, max(height - 8, 1)))
        x0 = int(rng.integers(0, max(width - 8, 1)))
        hh = int(rng.integers(4, height // 3 + 4))
        ww = int(rng.integers(4, width // 3 + 4))
        img[y0 : y0 + hh, x0 : x0 + ww] += rng.uniform(-50.0, 50.0)
    return np.clip(img, 0.0, 255.0)
