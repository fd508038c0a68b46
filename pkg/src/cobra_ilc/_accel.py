"""Optional numba acceleration.

Hot kernels are decorated with :func:`maybe_njit`. When numba is missing, or
``COBRA_ILC_DISABLE_NUMBA`` is set to a truthy value, the decorator is the
identity and every kernel runs as plain Python/numpy.
"""

import os

_FLAG = os.environ.get("COBRA_ILC_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if DISABLED:
        raise ImportError
    from numba import njit as _njit

    NUMBA_AVAILABLE = True
except ImportError:
    _njit = None
    NUMBA_AVAILABLE = False


def maybe_njit(func):
    """Compile ``func`` with numba in nopython mode if the backend is enabled."""
    if NUMBA_AVAILABLE:
        return _njit(cache=True, fastmath=False)(func)
    return func


def backend_name():
    return "numba" if NUMBA_AVAILABLE else "numpy"
