"""Geometric quantization and torus reduction on products of projective spaces."""
from ._backend import BACKEND

__all__ = ["BACKEND", "__version__"]

__version__ = "0.1.0"
