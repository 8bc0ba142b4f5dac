"""Build the optional Cython kernels; the package falls back to NumPy without them."""
import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("BUCMRL_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "bucmatrixrl._kernels",
                    ["src/bucmatrixrl/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
