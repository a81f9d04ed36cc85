# Builds the compiled integrator kernels. The package works without them
# (pure-Python fallback selected at import), so a failed extension build is
# tolerated: `VPLANGEVIN_REQUIRE_EXT=1 pip install .` to make it fatal.
import os

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "vplangevin._kernels",
                sources=["src/vplangevin/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # no FMA contraction: compiled paths must match the pure-Python
                # fallback bit for bit
                extra_compile_args=["-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    if os.environ.get("VPLANGEVIN_REQUIRE_EXT"):
        raise
    print(f"vplangevin: building without compiled kernels ({exc})")

setup(ext_modules=ext_modules)
