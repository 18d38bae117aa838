"""Build hook for the optional compiled kernels.

The pure-Python fallback in ``lapcap._kernels_py`` is used whenever the
extension is missing, so a failed compile never breaks installation.
``-ffast-math`` plus libmvec lets gcc vectorize the exp sweep; without them
numpy's SIMD exp beats the compiled loop.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("LAPCAP_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "lapcap._kernels",
                    ["src/lapcap/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-ffast-math"],
                    libraries=["m", "mvec"],
                    optional=True,
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
