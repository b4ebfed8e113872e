"""Numba switch.

Set ``EIGENBEHAVIOUR_NO_NUMBA=1`` to force the pure-numpy kernels even when
numba is importable. The flag is read once, at import time.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FLAG = os.environ.get("EIGENBEHAVIOUR_NO_NUMBA", "").strip().lower()

NUMBA_AVAILABLE = numba is not None
NUMBA_ENABLED = NUMBA_AVAILABLE and _FLAG not in {"1", "true", "yes", "on"}


def njit(fn):
    """Compile ``fn`` in nopython mode when numba is importable."""
    if numba is None:
        return fn
    return numba.njit(cache=True)(fn)


def python_version(fn):
    """Uncompiled body of an ``njit`` kernel."""
    return getattr(fn, "py_func", fn)
