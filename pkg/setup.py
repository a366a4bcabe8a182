"""Build script for the optional compiled kernel core.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so extension build failures are downgraded to a
warning unless SOUNDSIGHT_REQUIRE_EXT=1 is set.
"""

import os
import sys

from setuptools import setup

ext_modules = []
if os.environ.get("SOUNDSIGHT_NO_EXT", "0") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "soundsight._kernels._ck",
                    ["src/soundsight/_kernels/_ck.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except Exception as exc:  # noqa: BLE001 - deliberately broad: ext is optional
        if os.environ.get("SOUNDSIGHT_REQUIRE_EXT") == "1":
            raise
        sys.stderr.write(f"warning: compiled kernels skipped ({exc}); using numpy fallback\n")

setup(ext_modules=ext_modules)
