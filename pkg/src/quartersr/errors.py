"""Exception hierarchy shared across the package.

Error classes are kept distinct so callers (and the CLI exit-code
mapping) can tell apart unreadable inputs, malformed content, bad
configuration, and numerical failures.
"""


class QuarterSRError(Exception):
    """Base class for all errors raised by this package."""


class ImageReadError(QuarterSRError):
    """The image file could not be opened or read."""


class ImageFormatError(QuarterSRError):
    """The image file is malformed (bad header, truncated data, ...)."""


class UnsupportedImageError(QuarterSRError):
    """The image uses a bit depth or color mode we do not accept."""


class DimensionMismatchError(QuarterSRError):
    """Two images that must share dimensions do not."""


class MaskFormatError(QuarterSRError):
    """A mask file is malformed."""


class MaskInvariantError(QuarterSRError):
    """A mask violates the quarter-sampling invariants (density, cell rule)."""


class EmptyWindowError(QuarterSRError):
    """A reconstruction window contains no measured pixel."""


class ConfigError(QuarterSRError):
    """A configuration file or option value could not be parsed."""


class ChainConfigError(ConfigError):
    """An invalid sensor/reconstructor/refiner combination was requested."""


class DataError(QuarterSRError):
    """A dataset or model file is missing, empty, or unusable."""


class NumericError(QuarterSRError):
    """A numerical failure occurred (non-finite loss, diverged training)."""
