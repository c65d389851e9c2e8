"""Numba/NumPy backend selection for the hot kernels.

Kernels are written once as plain Python over NumPy arrays.  When numba is
available (and not disabled), they are compiled with ``@njit``; otherwise the
interpreted versions run as-is.  Both paths execute the same statements in the
same order, so results are expected to agree bitwise on float64 data.

Set ``CLOTHFOLD_NUMBA=0`` in the environment to force the pure-NumPy path
(useful for debugging and for the backend benchmark).
"""

import os

_flag = os.environ.get("CLOTHFOLD_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in ("0", "false", "no", "off")

if NUMBA_REQUESTED:
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


def jit_kernel(func):
    """Compile ``func`` with numba when enabled, else return it unchanged."""
    if NUMBA_ENABLED:
        return _njit(cache=True)(func)
    return func


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
