"""Optional numba acceleration.

Set ``HARVEST_SA_JIT=0`` to run every kernel as plain Python/numpy. The
switch is read once at import time.
"""
import os

_flag = os.environ.get("HARVEST_SA_JIT", "1").strip().lower()
JIT_REQUESTED = _flag not in ("0", "false", "no", "off")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

JIT_ENABLED = JIT_REQUESTED and numba is not None


def njit(func=None, **options):
    """``numba.njit`` when enabled, identity decorator otherwise.

    fastmath is never turned on: both paths must give the same floats.
    """
    options.setdefault("cache", True)
    options.setdefault("nogil", True)

    def wrap(f):
        if JIT_ENABLED:
            return numba.njit(**options)(f)
        return f

    if func is None:
        return wrap
    return wrap(func)


def python_impl(func):
    """The undecorated Python function behind a kernel."""
    return getattr(func, "py_func", func)
