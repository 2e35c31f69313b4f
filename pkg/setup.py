import os

from setuptools import setup

ext_modules = []
if os.environ.get("GIRP_PURE_PYTHON") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/girp/interp/_kernel.pyx"],
            compiler_directives={"language_level": "3"},
        )
        for ext in ext_modules:
            ext.extra_compile_args = ["-O2"]
    except ImportError:
        # no Cython: install with the pure-Python kernel only
        ext_modules = []

setup(ext_modules=ext_modules)
