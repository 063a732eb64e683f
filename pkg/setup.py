"""Build script: compiles the Cython kernel module when possible.

If Cython or a C compiler is missing the install still succeeds and the
package falls back to the pure-numpy kernels at import time.
"""

import os

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/cevhedge/_kernels/_core.pyx"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
        ext.define_macros.append(("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION"))
except Exception as exc:  # pragma: no cover - build-environment dependent
    if os.environ.get("CEVHEDGE_REQUIRE_EXT"):
        raise
    print(f"cevhedge: building without compiled kernels ({exc!r})")
    ext_modules = []

setup(ext_modules=ext_modules)
