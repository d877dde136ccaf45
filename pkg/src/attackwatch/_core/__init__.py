"""Kernel backend selection.

The compiled extension is used when it imports; setting
``ATTACKWATCH_PURE_PYTHON=1`` forces the pure-Python fallback.
"""

import os

from . import _pykernel

BACKEND = "python"
peak_tables = _pykernel.peak_tables

if not os.environ.get("ATTACKWATCH_PURE_PYTHON"):
    try:
        from . import _ckernel
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        peak_tables = _ckernel.peak_tables

__all__ = ["BACKEND", "peak_tables"]
