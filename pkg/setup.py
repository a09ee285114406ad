"""Build script: compiles the optional Cython kernel core.

The package works without the extension (a NumPy fallback is selected at
import time), so any failure here downgrades to a warning rather than
aborting the install.
"""
import os
import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext = Extension(
        "capflow._kernels_c",
        sources=["src/capflow/_kernels_c.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize([ext], language_level=3)
except Exception as exc:  # noqa: BLE001 - absence of a compiler is not fatal
    sys.stderr.write(f"capflow: building without compiled kernels ({exc})\n")
    ext_modules = []

setup(ext_modules=ext_modules)
