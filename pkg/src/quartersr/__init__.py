"""Quarter-sampling image acquisition, reconstruction, and CNN refinement."""

__version__ = "0.1.0"
