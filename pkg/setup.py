"""Build script: compiles the optional Cython splatting kernels.

The package works without the extension (a pure-NumPy fallback is selected
at import time), so any failure here downgrades to a source-only install
rather than aborting.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "pano4d.raster.kernels_cy",
                ["src/pano4d/raster/kernels_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - environment dependent
    import sys

    print(f"pano4d: skipping compiled kernels ({exc!r}); "
          "falling back to pure Python at runtime", file=sys.stderr)

setup(ext_modules=ext_modules)
