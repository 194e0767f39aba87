"""Picks the compiled kernel when it is importable."""
import os

from . import _kernels_py

if os.environ.get("GSQUANT_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"

density_terms = kernels.density_terms
