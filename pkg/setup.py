"""Build script for the optional compiled Gibbs kernel.

The package works without the extension: dca._kernel falls back to a pure
Python implementation at import time.  Building requires Cython and numpy
headers; if either is missing the extension is simply skipped.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "dca._kernel._collapsed_c",
                ["src/dca/_kernel/_collapsed_c.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O2"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
