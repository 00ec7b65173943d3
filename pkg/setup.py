import os

import numpy as np
from setuptools import Extension, setup


def build_ext_modules():
    # Fall back to the pure-Python kernels when Cython or a compiler is missing.
    if os.environ.get("PROTOVOTE_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "protovote.gbdt._kernels",
        ["src/protovote/gbdt/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


setup(ext_modules=build_ext_modules())
