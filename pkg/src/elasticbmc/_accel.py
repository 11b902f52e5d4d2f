"""Numba switch.

Set ``ELASTICBMC_NO_NUMBA=1`` to force the pure-numpy kernels (useful for
debugging, coverage, or platforms without numba).  The flag is read once at
import time.
"""
import os

_DISABLED = os.environ.get("ELASTICBMC_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False
    _njit = None


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when available, otherwise a no-op decorator."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return _njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda fn: fn
