"""Build script for the optional compiled kernels.

The package works without the extension; ``delaybandits._backend`` falls
back to the pure-Python kernels when the import fails.
"""
from __future__ import annotations

import os

from setuptools import setup

ext_modules = []
if os.environ.get("DELAYBANDITS_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "delaybandits._kernels",
                    ["src/delaybandits/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
