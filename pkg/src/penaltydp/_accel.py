"""Optional numba acceleration.

Kernels are written once in plain numpy-compatible Python and decorated with
:func:`jit`. Setting ``PENALTYDP_DISABLE_NUMBA=1`` (or running without numba
installed) leaves them as ordinary Python functions, which is the reference
fallback path.
"""

import os
import warnings

_DISABLE = os.environ.get("PENALTYDP_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLE:
        raise ImportError
    import numba as _nb
except ImportError:  # pragma: no cover - exercised only without numba
    _nb = None
    if not _DISABLE:
        warnings.warn("numba not found; sampler kernels run in pure Python/numpy")

NUMBA_ENABLED = _nb is not None


def jit(func):
    """``numba.njit(cache=True)`` when enabled, identity otherwise.

    The undecorated function stays reachable as ``func.py_func`` in both
    cases so benchmarks and equivalence tests can call the fallback.
    """
    if _nb is None:
        func.py_func = func
        return func
    return _nb.njit(cache=True)(func)
