import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("TBRW_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "tbrw._ckernels",
                sources=["src/tbrw/_ckernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
