"""Backend selection for the hot kernels.

Kernels in :mod:`cuniform.kernels` come in two flavours: a numba ``@njit``
version and a numpy (or plain Python) fallback.  The numba path is used when
numba imports cleanly and the environment variable ``CUNIFORM_DISABLE_NUMBA``
is unset or ``0``.  Tests and the benchmark flip the backend at runtime with
:func:`use_numba`.
"""

import contextlib
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
_ENV_FLAG = "CUNIFORM_DISABLE_NUMBA"

_enabled = HAVE_NUMBA and os.environ.get(_ENV_FLAG, "0").strip().lower() in ("", "0", "false", "no")


def numba_enabled() -> bool:
    return _enabled


def backend_name() -> str:
    return "numba" if _enabled else "numpy"


@contextlib.contextmanager
def use_numba(flag: bool):
    """Temporarily force the numba (``True``) or fallback (``False``) kernels."""
    global _enabled
    if flag and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    previous = _enabled
    _enabled = bool(flag)
    try:
        yield
    finally:
        _enabled = previous


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn
