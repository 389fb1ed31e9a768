import os

import numpy as np
from setuptools import Extension, setup

# The compiled simplex kernel is optional: the package falls back to the
# numpy implementation when the extension is missing.
extensions = []
if os.path.exists("src/gridsddp/lp/_speedups.pyx"):
    try:
        from Cython.Build import cythonize

        extensions = cythonize(
            [
                Extension(
                    "gridsddp.lp._speedups",
                    ["src/gridsddp/lp/_speedups.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        pass

setup(ext_modules=extensions)
