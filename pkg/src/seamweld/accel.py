"""Numba switch for the hot kernels.

Kernels are compiled with numba unless ``SEAMWELD_DISABLE_NUMBA`` is set to a
truthy value or numba cannot be imported.  In that case the kernels run either
as plain interpreted Python (the max-flow solver) or through their vectorised
numpy twins (belief propagation, bilinear warping).
"""
import logging
import os

logger = logging.getLogger(__name__)

_FALSY = {"", "0", "false", "no", "off"}


def _env_flag(name):
    return os.environ.get(name, "").strip().lower() not in _FALSY


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _env_flag("SEAMWELD_DISABLE_NUMBA")

if not USE_NUMBA:
    logger.debug("numba disabled, using numpy/python kernels")


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, otherwise a pass-through decorator.

    The compiled dispatcher keeps the original function on ``.py_func`` so
    tests can always reach the interpreted version.
    """
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return numba.njit(*args, **kwargs)

    def wrap(func):
        func.py_func = func
        return func

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return wrap(args[0])
    return wrap


def backend():
    return "numba" if USE_NUMBA else "numpy"


def max_threads():
    """Thread cap from ``SEAMWELD_THREADS`` (default 1)."""
    raw = os.environ.get("SEAMWELD_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        logger.warning("ignoring non-integer SEAMWELD_THREADS=%r", raw)
        return 1
    return max(1, n)
