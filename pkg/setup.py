import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "regiongain._core._speedups",
                ["src/regiongain/_core/_speedups.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # Pure-python fallback in regiongain._core is used when the
    # compiled module is unavailable.
    ext_modules = []

setup(ext_modules=ext_modules)
