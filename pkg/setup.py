"""Build script: compiles the optional tridiagonal sweep extension.

If Cython (or a C compiler) is unavailable the install still succeeds;
comgreen._kernels then falls back to the LAPACK-backed pure-Python path.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "comgreen._kernels._native",
                ["src/comgreen/_kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
