"""Build the optional Cython nearest-neighbour core.

The package works without it; ``toolforge.nn`` falls back to a numpy
implementation when the extension is missing.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("TOOLFORGE_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "toolforge._kdtree",
                    ["src/toolforge/_kdtree.pyx"],
                    include_dirs=[np.get_include()],
                    # keep results bit-identical with the numpy fallback
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
