"""Vectorised numpy kernels. Reference path and fallback for the numba ones."""

import numpy as np

OBSERVED, FORWARD_FILLED, HISTORY_MEAN, POPULATION_MEDIAN = 0, 1, 2, 3


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def lstm_gates_forward(pre, c_prev):
    """Gate nonlinearities of one LSTM step.

    ``pre`` holds the (B, 4m) pre-activations in gate order i, f, g, o.
    Returns ``(hc, cache)`` where ``hc`` is ``[h | c]`` of shape (B, 2m).
    """
    m = c_prev.shape[-1]
    i = _sigmoid(pre[:, :m])
    f = _sigmoid(pre[:, m:2 * m])
    g = np.tanh(pre[:, 2 * m:3 * m])
    o = _sigmoid(pre[:, 3 * m:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    hc = np.concatenate([o * tc, c], axis=1)
    gates = np.concatenate([i, f, g, o, tc], axis=1)
    return hc, gates


def lstm_gates_backward(d_hc, gates, c_prev):
    """Gradients of ``lstm_gates_forward`` w.r.t. ``pre`` and ``c_prev``."""
    m = c_prev.shape[-1]
    i = gates[:, :m]
    f = gates[:, m:2 * m]
    g = gates[:, 2 * m:3 * m]
    o = gates[:, 3 * m:4 * m]
    tc = gates[:, 4 * m:]
    dh = d_hc[:, :m]
    dc = d_hc[:, m:] + dh * o * (1.0 - tc * tc)
    d_pre = np.concatenate([
        dc * g * i * (1.0 - i),
        dc * c_prev * f * (1.0 - f),
        dc * i * (1.0 - g * g),
        dh * tc * o * (1.0 - o),
    ], axis=1)
    return d_pre, dc * f


def impute_column(times, values, n_rows, horizon, median):
    """Three-tier imputation of one variable onto an hourly grid.

    ``times`` must be sorted ascending. Row ``t`` (1-based) is evaluated at its
    right edge ``t``; only observations with time <= t are visible.
    """
    edges = np.arange(1, n_rows + 1, dtype=np.float64)
    out = np.full(n_rows, median, dtype=np.float64)
    mask = np.full(n_rows, POPULATION_MEDIAN, dtype=np.int8)
    if times.size == 0:
        return out, mask
    k = np.searchsorted(times, edges, side="right")
    seen = k > 0
    last = np.where(seen, k - 1, 0)
    csum = np.cumsum(values)
    hist_mean = csum[last] / np.maximum(k, 1)
    age = edges - times[last]
    recent = seen & (age <= horizon)
    stale = seen & ~recent
    out[recent] = values[last[recent]]
    out[stale] = hist_mean[stale]
    mask[recent] = FORWARD_FILLED
    mask[recent & (age < 1.0)] = OBSERVED
    mask[stale] = HISTORY_MEAN
    return out, mask


def lstm_sequence_forward(xp, Wh):
    """Unroll a layer from a zero state given the input projections ``xp`` (L, B, 4m).

    Returns ``[h | c]`` per step, (L, B, 2m), and the gate cache (L, B, 5m).
    """
    L, B, _ = xp.shape
    m = Wh.shape[0]
    out = np.empty((L, B, 2 * m))
    gates = np.empty((L, B, 5 * m))
    h = np.zeros((B, m))
    c = np.zeros((B, m))
    for t in range(L):
        out[t], gates[t] = lstm_gates_forward(xp[t] + h @ Wh, c)
        h, c = out[t, :, :m], out[t, :, m:]
    return out, gates


def lstm_sequence_backward(d_out, gates, out, Wh):
    """Back-propagation through time; gradient w.r.t. the pre-activations (L, B, 4m)."""
    L, B, _ = d_out.shape
    m = Wh.shape[0]
    d_pre = np.empty((L, B, 4 * m))
    d_h = np.zeros((B, m))
    d_c = np.zeros((B, m))
    zeros = np.zeros((B, m))
    for t in range(L - 1, -1, -1):
        d_hc = d_out[t].copy()
        d_hc[:, :m] += d_h
        d_hc[:, m:] += d_c
        c_prev = out[t - 1, :, m:] if t > 0 else zeros
        d_pre[t], d_c = lstm_gates_backward(d_hc, gates[t], c_prev)
        d_h = d_pre[t] @ Wh.T
    return d_pre
