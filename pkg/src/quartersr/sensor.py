"""Sensor models: low-resolution box sensor and quarter-sampling sensor.

The low-resolution sensor averages each aligned 2x2 cell of the
high-resolution reference and decimates twofold.  The quarter-sampling
sensor multiplies the reference element-wise with a binary mask, keeping
one high-resolution pixel per cell and discarding the rest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .mask import SamplingMask


@dataclass(frozen=True)
class SampledImage:
    """Dense value grid (meaningful where mask=1) plus its sampling mask."""

    values: np.ndarray
    mask: SamplingMask

    def __post_init__(self):
        if self.values.shape != self.mask.bits.shape:
            raise DimensionMismatchError(
                f"values {self.values.shape} vs mask {self.mask.bits.shape}"
            )

    def measured_count(self) -> int:
        return int(self.mask.bits.sum())


def simulate_lowres(reference: np.ndarray) -> np.ndarray:
    """Box-filter (2x2 mean) and decimate the reference by 2 in each axis."""
    reference = np.asarray(reference, dtype=np.float64)
    h, w = reference.shape
    if h % 2 or w % 2:
        raise DimensionMismatchError(f"even dimensions required, got {w}x{h}")
    return reference.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def simulate_quarter(reference: np.ndarray, mask: SamplingMask) -> SampledImage:
    """Element-wise product of the reference with the binary mask."""
    reference = np.asarray(reference, dtype=np.float64)
    if reference.shape != mask.bits.shape:
        raise DimensionMismatchError(
            f"reference {reference.shape} vs mask {mask.bits.shape}"
        )
    return SampledImage(values=reference * mask.bits, mask=mask)
