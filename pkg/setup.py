"""Builds the optional compiled kernel; the package falls back to NumPy without it."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("GSQUANT_NO_EXT", "") in ("", "0"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("gsquant._kernels", ["src/gsquant/_kernels.pyx"],
                       include_dirs=[numpy.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            language_level=3)
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
