import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the compiled kernels when possible.

    The package works without them (it falls back to the NumPy kernels at
    import time), so a missing compiler or Cython must not fail the install.
    """

    def run(self):
        try:
            super().run()
        except Exception as exc:
            print(f"viscogrid: skipping compiled kernels ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"viscogrid: skipping {ext.name} ({exc})")


def extensions():
    if os.environ.get("VISCOGRID_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "viscogrid._kernels_cy",
        ["src/viscogrid/_kernels_cy.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
