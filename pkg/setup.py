"""Build script: compiles the Cython kernel extension when possible.

The package works without the extension (a NumPy fallback is selected at
import time), so a missing compiler must not break installation.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/harmonet/backend/_kernels.pyx",
        compiler_directives={"language_level": "3"},
    )
    include_dirs = [numpy.get_include()]
except ImportError as exc:
    print(f"harmonet: building without compiled kernels ({exc})", file=sys.stderr)
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
