"""Numba switch.

Set ``PYRAMIDSEG_DISABLE_NUMBA=1`` to run every kernel on the pure-numpy /
pure-Python path. The flag is read once at import time.
"""

from __future__ import annotations

import os

_disabled = os.environ.get("PYRAMIDSEG_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _disabled:
        raise ImportError
    import numba
except ImportError:
    numba = None

USE_NUMBA = numba is not None


def njit(func):
    """``numba.njit(cache=True)`` when enabled, identity otherwise.

    The undecorated function stays reachable as ``.py_func`` either way so
    benchmarks and tests can compare both paths in one process.
    """
    if numba is None:
        func.py_func = func
        return func
    return numba.njit(cache=True)(func)
