import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; kernels fall back to numpy
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("CATTRANSFER_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "cattransfer._kernels",
                ["src/cattransfer/_kernels.pyx"],
                depends=["src/cattransfer/_kernels_impl.h"],
                include_dirs=[np.get_include(), "src/cattransfer"],
                extra_compile_args=["-O3", "-march=native", "-fno-math-errno"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
