"""Build script: compiles the optional Cython pivot kernel.

If Cython or a C compiler is unavailable the package still installs and
falls back to the pure-numpy kernel at import time.
"""

import numpy as np
from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "gbdmpc._kernels._cy_kernel",
                ["src/gbdmpc/_kernels/_cy_kernel.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O2"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
