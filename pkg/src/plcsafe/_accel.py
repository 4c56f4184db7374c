"""Backend selection for the compiled kernels.

Set ``PLCSAFE_BACKEND=numpy`` (or ``PLCSAFE_NO_NUMBA=1``) before import to
force the pure-numpy code paths. Numba is used by default when importable.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None


def _numba_requested():
    if os.environ.get("PLCSAFE_NO_NUMBA", "").lower() in ("1", "true", "yes"):
        return False
    return os.environ.get("PLCSAFE_BACKEND", "numba").lower() != "numpy"


HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _numba_requested()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is installed, identity decorator otherwise.

    Kernels are always compiled when numba exists so both backends stay
    testable in one process; ``USE_NUMBA`` only controls dispatch.
    """
    if numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
