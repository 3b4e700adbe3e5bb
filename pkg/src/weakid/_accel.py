"""Numba switch.

Set ``WEAKID_DISABLE_NUMBA=1`` to force the pure-numpy kernels. The flag is
read once at import time.
"""

import os
import warnings

_disabled = os.environ.get("WEAKID_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError("disabled by WEAKID_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError as exc:
    if not _disabled:
        warnings.warn(f"numba unavailable ({exc}); using numpy kernels")
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def deco(func):
            return func

        return deco
