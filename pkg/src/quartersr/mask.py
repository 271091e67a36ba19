"""Quarter-sampling mask generation, file I/O, tiling, and shifting.

A quarter-sampling mask is a binary grid with exactly one measured
position inside every axis-aligned 2x2 cell, so the sample density is
exactly 25%.  Base masks are square with a configurable period (32 by
default) and get tiled periodically to cover a full image.  Shifting a
mask cyclically produces its augmentation variants; arbitrary shifts
are allowed, in which case the one-per-cell rule holds relative to the
shifted cell grid.

Mask file format (text): a header line ``QSMASK <width> <height>
<period>`` followed by ``height`` lines of ``width`` characters, each
'0' or '1'.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MaskFormatError, MaskInvariantError

DEFAULT_PERIOD = 32

# Shift offsets used for k-fold mask augmentation (first k entries are
# taken).  Chosen to spread over the 32x32 period; configurable from the
# CLI via --shift.
DEFAULT_SHIFTS = (
    (0, 0),
    (16, 16),
    (8, 24),
    (24, 8),
    (4, 12),
    (20, 28),
    (12, 4),
    (28, 20),
)


@dataclass(frozen=True)
class SamplingMask:
    """Binary sampling grid plus the period of its base pattern."""

    bits: np.ndarray = field(repr=False)
    period: int = DEFAULT_PERIOD

    def __post_init__(self):
        bits = np.ascontiguousarray(np.asarray(self.bits, dtype=np.uint8))
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def density(self) -> float:
        return float(self.bits.sum()) / self.bits.size


def validate_mask(mask: SamplingMask, cell_check: bool = True) -> None:
    """Check the 25% density invariant and, optionally, the cell rule.

    The cell rule (exactly one sample per axis-aligned 2x2 cell) holds
    for base masks and even shifts, but not for odd shifts, hence the
    flag.
    """
    bits = mask.bits
    h, w = bits.shape
    if h % 2 or w % 2:
        raise MaskInvariantError(f"mask dimensions must be even, got {w}x{h}")
    if not np.isin(bits, (0, 1)).all():
        raise MaskInvariantError("mask entries must be 0 or 1")
    expected = h * w // 4
    total = int(bits.sum())
    if total != expected:
        raise MaskInvariantError(
            f"mask density {total}/{bits.size} != exactly one quarter ({expected})"
        )
    if cell_check:
        cells = bits.reshape(h // 2, 2, w // 2, 2).sum(axis=(1, 3))
        if not (cells == 1).all():
            bad = int((cells != 1).sum())
            raise MaskInvariantError(
                f"{bad} aligned 2x2 cells do not contain exactly one sample"
            )


def generate_random_qs_mask(period: int = DEFAULT_PERIOD, seed: int = 0) -> SamplingMask:
    """Seeded random base mask: one uniformly chosen quadrant per 2x2 cell."""
    if period % 2:
        raise MaskInvariantError(f"mask period must be even, got {period}")
    rng = np.random.default_rng(seed)
    half = period // 2
    quadrant = rng.integers(0, 4, size=(half, half))
    bits = np.zeros((period, period), dtype=np.uint8)
    cy, cx = np.divmod(quadrant, 2)
    rows = np.arange(half)[:, None] * 2 + cy
    cols = np.arange(half)[None, :] * 2 + cx
    bits[rows, cols] = 1
    return SamplingMask(bits=bits, period=period)


def tile_mask(base: SamplingMask, width: int, height: int) -> SamplingMask:
    """Tile the base pattern periodically to cover width x height."""
    if width % 2 or height % 2:
        raise MaskInvariantError(f"tiled size must be even, got {width}x{height}")
    p = base.period
    reps_y = -(-height // p)
    reps_x = -(-width // p)
    bits = np.tile(base.bits[:p, :p], (reps_y, reps_x))[:height, :width]
    return SamplingMask(bits=bits, period=p)


def shift_mask(mask: SamplingMask, dx: int, dy: int) -> SamplingMask:
    """Cyclic shift of the stored grid by (dx, dy) pixels.

    out(i, j) = in((i - dy) mod height, (j - dx) mod width).  Shifts are
    effectively taken modulo the period for periodically tiled masks.
    """
    bits = np.roll(mask.bits, (dy, dx), axis=(0, 1))
    return SamplingMask(bits=bits, period=mask.period)


def format_mask(mask: SamplingMask) -> str:
    """The text mask format; round-trips with :func:`parse_mask`."""
    lines = [f"QSMASK {mask.width} {mask.height} {mask.period}"]
    lines.extend("".join("1" if v else "0" for v in row) for row in mask.bits)
    return "\n".join(lines) + "\n"


def parse_mask(text: str, cell_check: bool = True) -> SamplingMask:
    """Parse the text mask format and validate the invariants.

    Pass cell_check=False to accept masks that break the one-per-aligned-
    cell rule (e.g. saved odd-shift variants); density is always checked.
    """
    lines = text.splitlines()
    if not lines:
        raise MaskFormatError("empty mask text")
    header = lines[0].split()
    if len(header) != 4 or header[0] != "QSMASK":
        raise MaskFormatError(f"bad mask header: {lines[0]!r}")
    try:
        width, height, period = (int(t) for t in header[1:])
    except ValueError as exc:
        raise MaskFormatError(f"non-numeric mask header: {lines[0]!r}") from exc
    if width < 1 or height < 1 or period < 1:
        raise MaskFormatError(f"bad mask geometry: {lines[0]!r}")
    body = lines[1 : 1 + height]
    if len(body) != height:
        raise MaskFormatError(f"expected {height} mask rows, found {len(body)}")
    bits = np.zeros((height, width), dtype=np.uint8)
    for i, row in enumerate(body):
        if len(row) != width or set(row) - {"0", "1"}:
            raise MaskFormatError(f"bad mask row {i + 1}: {row!r}")
        bits[i] = np.frombuffer(row.encode("ascii"), dtype=np.uint8) - ord("0")
    mask = SamplingMask(bits=bits, period=period)
    validate_mask(mask, cell_check=cell_check)
    return mask


def save_mask(mask: SamplingMask, path) -> None:
    """Write the text mask format; round-trips with :func:`load_mask`."""
    Path(path).write_text(format_mask(mask), encoding="ascii")


def load_mask(path, cell_check: bool = True) -> SamplingMask:
    """Read and parse a mask file (see :func:`parse_mask`)."""
    try:
        text = Path(path).read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise MaskFormatError(f"cannot read mask file {path}: {exc}") from exc
    return parse_mask(text, cell_check=cell_check)
