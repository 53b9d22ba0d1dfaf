"""JIT switch for the hot kernels.

Kernels are written in the numba-compatible subset of Python. Setting
``NAKASIM_DISABLE_JIT=1`` (or running without numba installed) leaves them
as plain Python operating on numpy arrays, which is slow but lets the two
paths be compared against each other.
"""

import os

JIT_DISABLED = os.environ.get("NAKASIM_DISABLE_JIT", "0").lower() in ("1", "true", "yes")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

JIT_ENABLED = numba is not None and not JIT_DISABLED


def njit(func):
    """Compile ``func`` with numba in nopython/nogil mode unless disabled."""
    if not JIT_ENABLED:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def backend():
    return "numba" if JIT_ENABLED else "python"
