"""Build script; compiles the optional walk kernels when Cython is available.

Set L0FLOW_NO_EXT=1 to skip the extension and rely on the pure NumPy
kernels (the package selects the backend at import time).
"""

import os

from setuptools import setup

ext_modules = []
include_dirs = []
if not os.environ.get("L0FLOW_NO_EXT"):
    try:
        from Cython.Build import cythonize
        import numpy

        ext_modules = cythonize(
            "src/l0flow/_kernels_cy.pyx",
            compiler_directives={"language_level": "3"},
        )
        include_dirs = [numpy.get_include()]
    except ImportError:
        ext_modules = []

setup(
    ext_modules=ext_modules,
    include_dirs=include_dirs,
)
