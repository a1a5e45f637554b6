"""Masked face recognition benchmark: LBP features and six classical classifiers."""

from maskbench.imaging import GrayImage, PgmError, read_pgm, write_pgm

__version__ = "0.1.0"

__all__ = ["GrayImage", "PgmError", "read_pgm", "write_pgm", "__version__"]
