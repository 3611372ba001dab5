"""numba ports of the kernels in ``_numpy``; same signatures, same results."""

import math

import numba
import numpy as np

from ._numpy import FORWARD_FILLED, HISTORY_MEAN, OBSERVED, POPULATION_MEDIAN

jit = numba.njit(cache=True, fastmath=False)


# exp-based forms: libm tanh is several times slower inside these loops.
@jit
def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


@jit
def _tanh(x):
    return 2.0 / (1.0 + math.exp(-2.0 * x)) - 1.0


@jit
def lstm_gates_forward(pre, c_prev):
    B, m = c_prev.shape
    hc = np.empty((B, 2 * m))
    gates = np.empty((B, 5 * m))
    for b in range(B):
        for j in range(m):
            i = _sigmoid(pre[b, j])
            f = _sigmoid(pre[b, m + j])
            g = _tanh(pre[b, 2 * m + j])
            o = _sigmoid(pre[b, 3 * m + j])
            c = f * c_prev[b, j] + i * g
            tc = _tanh(c)
            hc[b, j] = o * tc
            hc[b, m + j] = c
            gates[b, j] = i
            gates[b, m + j] = f
            gates[b, 2 * m + j] = g
            gates[b, 3 * m + j] = o
            gates[b, 4 * m + j] = tc
    return hc, gates


@jit
def lstm_gates_backward(d_hc, gates, c_prev):
    B, m = c_prev.shape
    d_pre = np.empty((B, 4 * m))
    d_c_prev = np.empty((B, m))
    for b in range(B):
        for j in range(m):
            i = gates[b, j]
            f = gates[b, m + j]
            g = gates[b, 2 * m + j]
            o = gates[b, 3 * m + j]
            tc = gates[b, 4 * m + j]
            dh = d_hc[b, j]
            dc = d_hc[b, m + j] + dh * o * (1.0 - tc * tc)
            d_pre[b, j] = dc * g * i * (1.0 - i)
            d_pre[b, m + j] = dc * c_prev[b, j] * f * (1.0 - f)
            d_pre[b, 2 * m + j] = dc * i * (1.0 - g * g)
            d_pre[b, 3 * m + j] = dh * tc * o * (1.0 - o)
            d_c_prev[b, j] = dc * f
    return d_pre, d_c_prev


@jit
def impute_column(times, values, n_rows, horizon, median):
    out = np.empty(n_rows)
    mask = np.empty(n_rows, dtype=np.int8)
    n = times.shape[0]
    k = 0
    total = 0.0
    for r in range(n_rows):
        edge = r + 1.0
        while k < n and times[k] <= edge:
            total += values[k]
            k += 1
        if k == 0:
            out[r] = median
            mask[r] = POPULATION_MEDIAN
            continue
        age = edge - times[k - 1]
        if age <= horizon:
            out[r] = values[k - 1]
            mask[r] = OBSERVED if age < 1.0 else FORWARD_FILLED
        else:
            out[r] = total / k
            mask[r] = HISTORY_MEAN
    return out, mask


@jit
def lstm_sequence_forward(xp, Wh):
    L, B, _ = xp.shape
    m = Wh.shape[0]
    out = np.empty((L, B, 2 * m))
    gates = np.empty((L, B, 5 * m))
    h = np.zeros((B, m))
    c = np.zeros((B, m))
    for t in range(L):
        rec = np.dot(h, Wh)
        for b in range(B):
            for j in range(m):
                i = _sigmoid(xp[t, b, j] + rec[b, j])
                f = _sigmoid(xp[t, b, m + j] + rec[b, m + j])
                g = _tanh(xp[t, b, 2 * m + j] + rec[b, 2 * m + j])
                o = _sigmoid(xp[t, b, 3 * m + j] + rec[b, 3 * m + j])
                cn = f * c[b, j] + i * g
                tc = _tanh(cn)
                c[b, j] = cn
                h[b, j] = o * tc
                out[t, b, j] = o * tc
                out[t, b, m + j] = cn
                gates[t, b, j] = i
                gates[t, b, m + j] = f
                gates[t, b, 2 * m + j] = g
                gates[t, b, 3 * m + j] = o
                gates[t, b, 4 * m + j] = tc
    return out, gates


@jit
def lstm_sequence_backward(d_out, gates, out, Wh):
    L, B, _ = d_out.shape
    m = Wh.shape[0]
    wt = np.ascontiguousarray(Wh.T)
    d_pre = np.empty((L, B, 4 * m))
    step = np.empty((B, 4 * m))
    d_h = np.zeros((B, m))
    d_c = np.zeros((B, m))
    for t in range(L - 1, -1, -1):
        for b in range(B):
            for j in range(m):
                i = gates[t, b, j]
                f = gates[t, b, m + j]
                g = gates[t, b, 2 * m + j]
                o = gates[t, b, 3 * m + j]
                tc = gates[t, b, 4 * m + j]
                c_prev = out[t - 1, b, m + j] if t > 0 else 0.0
                dh = d_out[t, b, j] + d_h[b, j]
                dc = d_out[t, b, m + j] + d_c[b, j] + dh * o * (1.0 - tc * tc)
                step[b, j] = dc * g * i * (1.0 - i)
                step[b, m + j] = dc * c_prev * f * (1.0 - f)
                step[b, 2 * m + j] = dc * i * (1.0 - g * g)
                step[b, 3 * m + j] = dh * tc * o * (1.0 - o)
                d_c[b, j] = dc * f
        d_pre[t] = step
        d_h = np.dot(step, wt)
    return d_pre
