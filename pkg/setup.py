"""Build script: compiles the optional kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failing compiler only downgrades performance.
"""

import warnings

import numpy
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - cython is a build requirement
    cythonize = None


class OptionalBuildExt(build_ext):
    """Never fail the install because the extension did not compile."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover
            warnings.warn(f"skipping compiled kernels ({exc}); numpy fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover
            warnings.warn(f"skipping {ext.name} ({exc}); numpy fallback will be used")


extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "tscalib.backends._kernels",
                sources=["src/tscalib/backends/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=extensions, cmdclass={"build_ext": OptionalBuildExt})
