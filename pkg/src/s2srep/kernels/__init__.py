"""Hot inner loops, dispatched to numba or numpy per ``S2SREP_BACKEND``.

Both implementations live side by side so tests and ``benchmarks/`` can call
either one directly regardless of the active backend.
"""

import numpy as np

from .._backend import BACKEND
from . import _numpy as numpy_kernels
from ._numpy import FORWARD_FILLED, HISTORY_MEAN, OBSERVED, POPULATION_MEDIAN

if BACKEND == "numba":
    from . import _numba as active
else:
    active = numpy_kernels


def lstm_gates_forward(pre: np.ndarray, c_prev: np.ndarray):
    return active.lstm_gates_forward(np.ascontiguousarray(pre), np.ascontiguousarray(c_prev))


def lstm_gates_backward(d_hc: np.ndarray, gates: np.ndarray, c_prev: np.ndarray):
    return active.lstm_gates_backward(
        np.ascontiguousarray(d_hc), gates, np.ascontiguousarray(c_prev)
    )


def lstm_sequence_forward(xp: np.ndarray, Wh: np.ndarray):
    return active.lstm_sequence_forward(np.ascontiguousarray(xp), np.ascontiguousarray(Wh))


def lstm_sequence_backward(d_out: np.ndarray, gates: np.ndarray, out: np.ndarray,
                           Wh: np.ndarray):
    return active.lstm_sequence_backward(np.ascontiguousarray(d_out), gates, out,
                                         np.ascontiguousarray(Wh))


def impute_column(times: np.ndarray, values: np.ndarray, n_rows: int, horizon: float,
                  median: float):
    return active.impute_column(
        np.ascontiguousarray(times, dtype=np.float64),
        np.ascontiguousarray(values, dtype=np.float64),
        int(n_rows), float(horizon), float(median),
    )


__all__ = [
    "BACKEND", "OBSERVED", "FORWARD_FILLED", "HISTORY_MEAN", "POPULATION_MEDIAN",
    "lstm_gates_forward", "lstm_gates_backward", "lstm_sequence_forward",
    "lstm_sequence_backward", "impute_column", "numpy_kernels",
]
