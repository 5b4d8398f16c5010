import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install, kernels fall back to numpy
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("PU_TRANSFORMER_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "pu_transformer.geometry._ckernels",
                ["src/pu_transformer/geometry/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                # no fast-math / fma contraction: results must match the numpy path bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
