"""Build the compiled dynamics kernel.

The package works without it: ``tcawrist.kernel`` falls back to the
pure-Python twin in ``_core_py.py`` when ``tcawrist._core`` is missing.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - build without Cython
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "tcawrist._core",
                ["src/tcawrist/_core.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
