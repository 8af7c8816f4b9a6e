"""Build shim: compiles the optional fast kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so any build failure here degrades to a pure-python install
instead of breaking it.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    import numpy

    ext_modules = cythonize(
        "src/flipthrow/_core.pyx",
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
except Exception as exc:  # no cython / no compiler: pure install
    print(f"flipthrow: skipping compiled kernel ({exc})")

setup(ext_modules=ext_modules)
