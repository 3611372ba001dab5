"""Kernel backend selection.

``S2SREP_BACKEND=numpy`` forces the pure-numpy kernels; the default is numba
when it imports, numpy otherwise. The choice is made once, at import time.
"""

import os

BACKEND_ENV = "S2SREP_BACKEND"


def _resolve() -> str:
    requested = os.environ.get(BACKEND_ENV, "numba").strip().lower()
    if requested not in ("numba", "numpy"):
        raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {requested!r}")
    if requested == "numba":
        try:
            import numba  # noqa: F401
        except ImportError:
            return "numpy"
    return requested


BACKEND = _resolve()
