"""Builds the optional compiled entropy-coder core.

The package works without it (a pure-Python twin is selected at import
time), but encode/decode of real images is much faster with it.
"""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "resdiff.codec._entropy_cy",
                ["src/resdiff/codec/_entropy_cy.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
