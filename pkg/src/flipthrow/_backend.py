"""Kernel selection: compiled extension when importable, numpy otherwise.

Set FLIPTHROW_PURE=1 to force the python kernel (useful for benchmarking and
for debugging the extension against its reference).
"""

import os

from . import _kernel_py

if os.environ.get("FLIPTHROW_PURE", "0") not in ("", "0"):
    kernel = _kernel_py
    BACKEND = "python"
else:
    try:
        from . import _core as kernel

        BACKEND = "compiled"
    except ImportError:
        kernel = _kernel_py
        BACKEND = "python"


def backend_name() -> str:
    """Which kernel implementation this process is running on."""
    return BACKEND
