import os

from setuptools import setup

ext_modules = []
if not os.environ.get("ATTACKWATCH_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "attackwatch._core._ckernel",
                    ["src/attackwatch/_core/_ckernel.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # no Cython at build time: the pure-Python kernel is used
        ext_modules = []

setup(ext_modules=ext_modules)
