"""Kernel selection at import time.

The compiled extension is preferred; set ``GBSVAL_PURE_PYTHON=1`` to force
the numpy fallback (used by the benchmark and the backend parity tests).
"""
import os

from . import _fallback

fallback = _fallback

if os.environ.get("GBSVAL_PURE_PYTHON", "") not in ("", "0"):
    kernels = _fallback
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        kernels = _fallback

compiled = None
try:
    from . import _kernels as compiled  # type: ignore[attr-defined,no-redef]
except ImportError:
    compiled = None

BACKEND = kernels.BACKEND
