"""Numba switch.

Set ``QRK_DISABLE_NUMBA=1`` to run the pure-numpy kernels instead of the
compiled ones. The flag is read once, at import time.
"""
import os

_disabled = os.environ.get("QRK_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _disabled:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

USE_NUMBA = HAVE_NUMBA and not _disabled
