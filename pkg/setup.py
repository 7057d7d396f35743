"""Build script: compiles the CRF kernel extension when a toolchain is available.

The package works without the extension; coordkit.crf falls back to the
NumPy kernels at import time. Compilation failures therefore only warn.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """build_ext that degrades to a pure-Python install on compiler failure."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, broken toolchain
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"warning: building the CRF kernel extension failed ({exc}); "
            "installing with the pure NumPy fallback",
            file=sys.stderr,
        )


def extensions():
    import os

    if not os.path.exists("src/coordkit/_crfc.pyx"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        print(f"warning: {exc}; skipping compiled CRF kernels", file=sys.stderr)
        return []
    ext = Extension(
        "coordkit._crfc",
        ["src/coordkit/_crfc.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
