"""Frequency-selective reconstruction of quarter-sampled images.

The image is processed in small blocks.  Each block is modeled on a
larger transform window centered on it: an iterative matching pursuit
picks, one per iteration, the 2-D DFT basis function that best matches
the weighted residual, and accumulates a fraction (gamma) of its
weighted projection coefficient.  Spatial weights decay exponentially
with distance from the window center so that samples near the block
dominate; unmeasured pixels carry zero weight.  Conjugate-symmetric
coefficient pairs are updated together, keeping the synthesized model
real.

Measured pixels are never touched: the reconstruction copies them from
the input bit-exactly and fills only the unmeasured positions from the
block models.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import EmptyWindowError, MaskInvariantError
from .sensor import SampledImage

MODE_INDEPENDENT = "independent-blocks"
MODE_SEQUENTIAL = "sequential-reuse"

# Weight factor applied to already-reconstructed pixels in sequential-reuse
# mode (measured pixels keep factor 1).
REUSE_FACTOR = 0.5


@dataclass(frozen=True)
class FsrParams:
    """Block/window geometry and iteration parameters."""

    block_size: int = 4
    border: int = 14
    iterations: int = 100
    rho: float = 0.7
    gamma: float = 0.5
    mode: str = MODE_INDEPENDENT

    def __post_init__(self):
        if self.block_size < 1 or self.border < 0:
            raise ValueError("block_size must be >= 1 and border >= 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.mode not in (MODE_INDEPENDENT, MODE_SEQUENTIAL):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def transform_size(self) -> int:
        return self.block_size + 2 * self.border


@dataclass
class BlockModel:
    """Accumulated DFT coefficients and the synthesized spatial model."""

    coefficients: np.ndarray = field(repr=False)
    model: np.ndarray = field(repr=False)
    selected: list = field(default_factory=list)


@lru_cache(maxsize=8)
def _weight_grid(size: int, rho: float) -> np.ndarray:
    center = size // 2
    y = np.arange(size, dtype=np.float64) - center
    dist = np.sqrt(y[:, None] ** 2 + y[None, :] ** 2)
    w = rho**dist
    w.flags.writeable = False
    return w


@lru_cache(maxsize=8)
def _exp_table(size: int) -> np.ndarray:
    """Row k holds exp(2j*pi*k*n/size) for n = 0..size-1."""
    k = np.arange(size)
    table = np.exp(2j * np.pi * np.outer(k, k) / size)
    table.flags.writeable = False
    return table


def weighting_function(params: FsrParams) -> np.ndarray:
    """Spatial weights rho^distance over the transform support.

    The distance is Euclidean from the integer support center
    (transform_size // 2); the weight there is exactly 1.
    """
    return _weight_grid(params.transform_size, params.rho)


def select_basis(residual: np.ndarray, weights: np.ndarray) -> int:
    """Flat index of the DFT basis with the largest weighted projection.

    Maximizes |<residual, phi_k>_w|^2 / <phi_k, phi_k>_w; the norm term
    is constant across k (|phi_k| = 1 everywhere), so the argmax reduces
    to the peak of the transform of the weighted residual.  Ties break
    toward the lowest flat index.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if (weights < 0).any() or not weights.any():
        raise ValueError("weights must be non-negative and not all zero")
    spectrum = np.fft.fft2(weights * residual)
    return int(np.argmax(spectrum.real**2 + spectrum.imag**2))


def model_block(
    values: np.ndarray,
    weight_factors: np.ndarray,
    params: FsrParams,
) -> BlockModel:
    """Run the matching-pursuit loop on one transform window.

    `values` is the window signal (zeros where unmeasured are fine);
    `weight_factors` scales the spatial weights per pixel: 1 for
    measured, 0 for unknown (and REUSE_FACTOR for reused pixels in
    sequential mode).  Raises EmptyWindowError if no pixel has support.
    """
    size = params.transform_size
    if values.shape != (size, size):
        raise ValueError(f"window must be {size}x{size}, got {values.shape}")
    w_eff = weighting_function(params) * weight_factors
    w_total = w_eff.sum()
    if w_total == 0.0:
        raise EmptyWindowError("window contains no supported pixel")

    exp_tab = _exp_table(size)
    gamma = params.gamma
    residual = np.asarray(values, dtype=np.float64).copy()
    model = np.zeros_like(residual)
    coeffs = np.zeros((size, size), dtype=np.complex128)
    selected = []

    for _ in range(params.iterations):
        spectrum = np.fft.fft2(w_eff * residual)
        k = int(np.argmax(spectrum.real**2 + spectrum.imag**2))
        ky, kx = divmod(k, size)
        proj = spectrum[ky, kx] / w_total
        conj_ky, conj_kx = (-ky) % size, (-kx) % size
        basis = np.outer(exp_tab[ky], exp_tab[kx])
        if (conj_ky, conj_kx) == (ky, kx):
            # self-conjugate basis: coefficient must be real
            proj = proj.real
            coeffs[ky, kx] += gamma * proj
            contribution = gamma * proj * basis.real
        else:
            coeffs[ky, kx] += gamma * proj
            coeffs[conj_ky, conj_kx] += gamma * np.conj(proj)
            contribution = 2.0 * gamma * (proj * basis).real
        model += contribution
        residual -= contribution
        selected.append(k)

    return BlockModel(coefficients=coeffs, model=model, selected=selected)


def _pad_for_blocks(sampled: SampledImage, params: FsrParams):
    """Edge-replicate values and zero-pad the support map around the image.

    The bottom/right padding also absorbs partial blocks when the image
    size is not a multiple of the block size.
    """
    h, w = sampled.values.shape
    block = params.block_size
    border = params.border
    pad_h = (-h) % block
    pad_w = (-w) % block
    values = np.pad(
        sampled.values, ((border, border + pad_h), (border, border + pad_w)), mode="edge"
    )
    support = np.pad(
        sampled.mask.bits.astype(np.float64),
        ((border, border + pad_h), (border, border + pad_w)),
        mode="constant",
    )
    return values, support


def _fill_flagged(out, flagged, bits, values, block):
    """Fill blocks whose window saw no measurement from nearby samples."""
    h, w = out.shape
    for by, bx in flagged:
        radius = max(h, w)
        grow = block
        filled = False
        while grow <= radius and not filled:
            y0, y1 = max(0, by - grow), min(h, by + block + grow)
            x0, x1 = max(0, bx - grow), min(w, bx + block + grow)
            region_bits = bits[y0:y1, x0:x1]
            if region_bits.any():
                mean = values[y0:y1, x0:x1][region_bits == 1].mean()
                blk = np.s_[by : by + block, bx : bx + block]
                out[blk] = np.where(bits[blk] == 1, values[blk], mean)
                filled = True
            grow *= 2
        if not filled:
            raise MaskInvariantError("image contains no measured pixel at all")


def fsr_reconstruct(
    sampled: SampledImage,
    params: FsrParams | None = None,
    workers: int = 1,
) -> np.ndarray:
    """Reconstruct the full image from quarter-sampled data.

    Unmeasured pixels take the (clamped) block-model values; measured
    pixels are copied from the input unchanged.  In independent-blocks
    mode each window sees only measured samples and blocks may be
    processed in parallel with bit-identical results; sequential-reuse
    mode processes blocks in raster order, feeding previously
    reconstructed pixels back in at reduced weight.
    """
    params = params or FsrParams()
    if params.mode == MODE_SEQUENTIAL:
        return _reconstruct_sequential(sampled, params)

    values = sampled.values
    bits = sampled.mask.bits
    h, w = values.shape
    block = params.block_size
    size = params.transform_size
    padded, support = _pad_for_blocks(sampled, params)
    origins = [(by, bx) for by in range(0, h, block) for bx in range(0, w, block)]

    def solve(origin):
        by, bx = origin
        window = padded[by : by + size, bx : bx + size]
        factors = support[by : by + size, bx : bx + size]
        try:
            return model_block(window, factors, params).model
        except EmptyWindowError:
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            models = list(pool.map(solve, origins))
    else:
        models = [solve(origin) for origin in origins]

    out = values.astype(np.float64).copy()
    border = params.border
    flagged = []
    for (by, bx), model in zip(origins, models):
        if model is None:
            flagged.append((by, bx))
            continue
        core = model[border : border + block, border : border + block]
        bh = min(block, h - by)
        bw = min(block, w - bx)
        blk = np.s_[by : by + bh, bx : bx + bw]
        out[blk] = np.where(
            bits[blk] == 1, values[blk], np.clip(core[:bh, :bw], 0.0, 255.0)
        )
    if flagged:
        _fill_flagged(out, flagged, bits, values, block)
    return out


def _reconstruct_sequential(sampled: SampledImage, params: FsrParams) -> np.ndarray:
    values = sampled.values
    bits = sampled.mask.bits
    h, w = values.shape
    block = params.block_size
    border = params.border
    size = params.transform_size
    work, support = _pad_for_blocks(sampled, params)

    flagged = []
    for by in range(0, h, block):
        for bx in range(0, w, block):
            window = work[by : by + size, bx : bx + size]
            factors = support[by : by + size, bx : bx + size]
            try:
                model = model_block(window, factors, params).model
            except EmptyWindowError:
                flagged.append((by, bx))
                continue
            core = np.clip(model[border : border + block, border : border + block], 0.0, 255.0)
            blk_pad = np.s_[border + by : border + by + block, border + bx : border + bx + block]
            measured = support[blk_pad] == 1.0
            work[blk_pad] = np.where(measured, work[blk_pad], core)
            support[blk_pad] = np.where(measured, 1.0, REUSE_FACTOR)

    out = work[border : border + h, border : border + w]
    out = np.where(bits == 1, values, out)
    if flagged:
        _fill_flagged(out, flagged, bits, values, block)
    return out
