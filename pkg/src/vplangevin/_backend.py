"""Kernel backend selection.

The compiled extension is preferred; the pure-Python module is the fallback.
``VPLANGEVIN_KERNEL=py`` forces the fallback, ``VPLANGEVIN_KERNEL=c`` makes a
missing extension an error. Both backends are interchangeable bit for bit.
"""

import os

_requested = os.environ.get("VPLANGEVIN_KERNEL", "").strip().lower()

if _requested in ("py", "python"):
    from . import _kernels_py as kernels

    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]

        BACKEND = "c"
    except ImportError:
        if _requested == "c":
            raise
        from . import _kernels_py as kernels  # type: ignore[no-redef]

        BACKEND = "python"


def backend_name() -> str:
    """Name of the integrator backend in use: ``"c"`` or ``"python"``."""
    return BACKEND
