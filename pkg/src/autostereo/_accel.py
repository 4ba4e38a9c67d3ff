"""Optional numba acceleration.

Hot kernels are written once as plain Python loops and compiled with
``numba.njit`` when numba is importable.  Setting ``AUTOSTEREO_DISABLE_NUMBA=1``
forces the pure-numpy code paths instead; every kernel that has a numba
version also has a vectorized numpy twin that produces identical results.
"""

import logging
import os

logger = logging.getLogger(__name__)

_FLAG = "AUTOSTEREO_DISABLE_NUMBA"


def _disabled_by_env():
    return os.environ.get(_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


try:
    if _disabled_by_env():
        raise ImportError("disabled by " + _FLAG)
    import numba

    njit = numba.njit
    prange = numba.prange
    HAVE_NUMBA = True
except ImportError as exc:  # pragma: no cover - depends on environment
    logger.debug("numba unavailable (%s); using numpy kernels", exc)
    HAVE_NUMBA = False

    def njit(fn=None, **kwargs):
        def wrap(f):
            return f
        return wrap if fn is None else wrap(fn)

    prange = range


def use_numba():
    """True when compiled kernels should be dispatched to."""
    return HAVE_NUMBA and not _disabled_by_env()
