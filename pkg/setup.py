"""Build script for the optional compiled kernel core.

The package works without the extension (a pure-Python fallback is selected
at import time); set METROFLOW_SKIP_NATIVE=1 to skip compilation entirely.
"""

import os

from setuptools import Extension, setup


def _extensions():
    if os.environ.get("METROFLOW_SKIP_NATIVE") == "1":
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "metroflow._kernels._native",
        ["src/metroflow/_kernels/_native.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
