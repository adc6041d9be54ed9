"""Numba switch.

Set ``MTSCHED_DISABLE_NUMBA=1`` before import to force the pure-numpy paths.
"""
from __future__ import annotations

import functools
import os

_DISABLED = os.environ.get("MTSCHED_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError("numba disabled by MTSCHED_DISABLE_NUMBA")
    from numba import njit

    NUMBA_OK = True
except ImportError:
    NUMBA_OK = False

    def njit(*args, **kwargs):
        # bare @njit and @njit(...) both work
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(f):
            @functools.wraps(f)
            def wrapper(*a, **kw):
                return f(*a, **kw)

            return wrapper

        return decorator


__all__ = ["njit", "NUMBA_OK"]
