"""Build the optional Cython trial core.

The extension is optional: if Cython or a C compiler is missing the package
installs without it and falls back to the pure-Python engine at import.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("EONPROFILE_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "eonprofile._core",
                    ["src/eonprofile/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
