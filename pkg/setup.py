import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # sdist without Cython: pure-Python fallback only
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("ERSKIT_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "erskit._hac_ext",
                ["src/erskit/_hac_ext.pyx"],
                include_dirs=[np.get_include(), "src/erskit"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-fopenmp", "-ffp-contract=off"],
                extra_link_args=["-fopenmp"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
