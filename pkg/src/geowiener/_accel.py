"""Optional numba acceleration for the batched kernels.

Set ``GEOWIENER_DISABLE_NUMBA=1`` to run the pure-numpy kernels instead.
"""
import logging
import os

_FALSEY = ("", "0", "false", "no", "off")

DISABLED = os.environ.get("GEOWIENER_DISABLE_NUMBA", "").strip().lower() not in _FALSEY

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED

if numba is not None:
    logging.getLogger("numba").setLevel(logging.WARNING)


def njit(func):
    """Compile ``func`` with numba when available; otherwise return it unchanged."""
    if numba is None:
        return func
    return numba.njit(cache=True, nogil=True)(func)
