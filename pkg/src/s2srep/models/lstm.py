"""LSTM cell, encoder unroll and autoregressive decoders.

Everything here is batch-first: inputs ``(B, d)``, states ``(B, m)``. The
functions take numpy arrays or :class:`Tensor` operands, so the same code
runs under a tape (training) and without one (inference).

Parameters for one cell live in a flat dict under a prefix::

    {prefix}.Wx  (input_dim, 4m)   gate order: input, forget, candidate, output
    {prefix}.Wh  (m, 4m)
    {prefix}.b   (4m,)
"""

from __future__ import annotations

import numpy as np

from .. import numerics as nx
from ..numerics import ShapeError, Tensor


def init_lstm(rng: np.random.Generator, prefix: str, input_dim: int, m: int) -> dict:
    bound = 1.0 / np.sqrt(m)
    return {
        f"{prefix}.Wx": rng.uniform(-bound, bound, (input_dim, 4 * m)),
        f"{prefix}.Wh": rng.uniform(-bound, bound, (m, 4 * m)),
        f"{prefix}.b": rng.uniform(-bound, bound, (4 * m,)),
    }


def init_linear(rng: np.random.Generator, prefix: str, n_in: int, n_out: int) -> dict:
    bound = 1.0 / np.sqrt(n_in)
    return {
        f"{prefix}.W": rng.uniform(-bound, bound, (n_in, n_out)),
        f"{prefix}.b": rng.uniform(-bound, bound, (n_out,)),
    }


def linear(x, p: dict, prefix: str) -> Tensor:
    return nx.add(nx.matmul(x, p[f"{prefix}.W"]), p[f"{prefix}.b"])


def _dims(p: dict, prefix: str) -> tuple[int, int]:
    wx = p[f"{prefix}.Wx"]
    shape = wx.shape
    return shape[0], shape[1] // 4


def lstm_step(x, h, c, p: dict, prefix: str = "enc") -> tuple[Tensor, Tensor]:
    """One LSTM step. 1-D operands are treated as a batch of one."""
    d, m = _dims(p, prefix)
    xs, hs, cs = (v.shape if isinstance(v, Tensor) else np.shape(v) for v in (x, h, c))
    single = len(xs) == 1
    if single:
        x, h, c = (nx.reshape(v, (1, -1)) for v in (x, h, c))
        xs, hs, cs = (1,) + xs, (1,) + hs, (1,) + cs
    if xs[-1] != d or hs[-1] != m or cs[-1] != m:
        raise ShapeError(f"lstm_step: x {xs}, h {hs}, c {cs} do not match cell (d={d}, m={m})")
    hc = nx.lstm_cell(x, h, c, p[f"{prefix}.Wx"], p[f"{prefix}.Wh"], p[f"{prefix}.b"])
    h_new, c_new = nx.slice_(hc, 0, m), nx.slice_(hc, m, 2 * m)
    if single:
        h_new, c_new = nx.reshape(h_new, (m,)), nx.reshape(c_new, (m,))
    return h_new, c_new


def lstm_step_gated(x, h, c, p: dict, prefix: str = "enc") -> tuple[Tensor, Tensor]:
    """Same recurrence with separate matmul/add nodes feeding ``lstm_gates``."""
    _, m = _dims(p, prefix)
    pre = nx.add(nx.add(nx.matmul(x, p[f"{prefix}.Wx"]), nx.matmul(h, p[f"{prefix}.Wh"])),
                 p[f"{prefix}.b"])
    hc = nx.lstm_gates(pre, c)
    return nx.slice_(hc, 0, m), nx.slice_(hc, m, 2 * m)


def lstm_step_unfused(x, h, c, p: dict, prefix: str = "enc") -> tuple[Tensor, Tensor]:
    """Same recurrence as :func:`lstm_step`, spelled out in primitive ops."""
    _, m = _dims(p, prefix)
    pre = nx.add(nx.add(nx.matmul(x, p[f"{prefix}.Wx"]), nx.matmul(h, p[f"{prefix}.Wh"])),
                 p[f"{prefix}.b"])
    i = nx.sigmoid(nx.slice_(pre, 0, m))
    f = nx.sigmoid(nx.slice_(pre, m, 2 * m))
    g = nx.tanh(nx.slice_(pre, 2 * m, 3 * m))
    o = nx.sigmoid(nx.slice_(pre, 3 * m, 4 * m))
    c_new = nx.add(nx.mul(f, c), nx.mul(i, g))
    return nx.mul(o, nx.tanh(c_new)), c_new


def run_layer(steps, p: dict, prefix: str):
    """Unroll one layer over time-major ``steps`` (L, B, k) from a zero state.

    Returns the hidden states (L, B, m) and the full ``[h | c]`` tensor.
    """
    _, m = _dims(p, prefix)
    hc = nx.lstm_sequence(steps, p[f"{prefix}.Wx"], p[f"{prefix}.Wh"], p[f"{prefix}.b"])
    return nx.slice_(hc, 0, m), hc


def run_encoder(inputs: np.ndarray, p: dict, prefix: str = "enc"):
    """Unroll over ``inputs`` (B, T, d) from a zero state.

    Returns the stacked hidden states (T, B, m) and the final ``(h, c)``.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 3 or inputs.shape[1] == 0:
        raise ShapeError(f"encoder needs (B, T>=1, d) input, got {inputs.shape}")
    d, m = _dims(p, prefix)
    if inputs.shape[2] != d:
        raise ShapeError(f"encoder expects {d} input channels, got {inputs.shape[2]}")
    T = inputs.shape[1]
    hs, hc = run_layer(np.ascontiguousarray(inputs.transpose(1, 0, 2)), p, prefix)
    last = nx.index(hc, T - 1)
    return hs, nx.slice_(last, 0, m), nx.slice_(last, m, 2 * m)


def run_encoder_stepwise(inputs: np.ndarray, p: dict, prefix: str = "enc"):
    """Reference unroll with one :func:`lstm_step` per time step; same outputs."""
    inputs = np.asarray(inputs, dtype=np.float64)
    B = inputs.shape[0]
    _, m = _dims(p, prefix)
    h = np.zeros((B, m))
    c = np.zeros((B, m))
    hs = []
    for t in range(inputs.shape[1]):
        h, c = lstm_step(inputs[:, t], h, c, p, prefix)
        hs.append(h)
    return nx.stack(hs, axis=0), h, c


def decode(h, c, x_first, steps: int, p: dict, prefix: str = "dec",
           readout: str = "out") -> list[Tensor]:
    """Autoregressive decoder fed its own previous prediction."""
    if steps <= 0:
        raise ValueError(f"decoder needs steps >= 1, got {steps}")
    x = x_first
    outputs = []
    for _ in range(steps):
        h, c = lstm_step(x, h, c, p, prefix)
        x = linear(h, p, readout)
        outputs.append(x)
    return outputs


def attention_weights(h_dec, enc_stack, enc_proj, p: dict, prefix: str = "att") -> Tensor:
    """Softmax-normalised scores over encoder states, shape (T, B).

    Primitive-op reference for the fused attention used by the decoder.

    ``enc_stack`` is (T, B, m); ``enc_proj`` is ``enc_stack @ W_e``, reused
    across decode steps.
    """
    q = nx.matmul(h_dec, p[f"{prefix}.Wd"])
    scores = nx.matmul(nx.tanh(nx.add(enc_proj, q)), p[f"{prefix}.beta"])
    return nx.softmax(scores, axis=0)


def context_vector(alpha, enc_stack) -> Tensor:
    T, B = alpha.shape
    return nx.sum_(nx.mul(nx.reshape(alpha, (T, B, 1)), enc_stack), axis=0)


def decode_attended(h, c, x_first, enc_stack, steps: int, p: dict,
                    prefix: str = "dec", att_prefix: str = "att", readout: str = "out",
                    alpha_log: list | None = None) -> list[Tensor]:
    """Decoder whose input at each step is ``[previous prediction ; context]``.

    ``enc_stack`` holds the encoder states, (T, B, m) or a list of (B, m).

    The context for a step is computed from the decoder state entering it,
    so the first step attends with the encoder's final hidden state.
    """
    if steps <= 0:
        raise ValueError(f"decoder needs steps >= 1, got {steps}")
    if isinstance(enc_stack, (list, tuple)):
        enc_stack = nx.stack(enc_stack, axis=0) if enc_stack else None
    if enc_stack is None or enc_stack.shape[0] == 0:
        raise ShapeError("attention needs at least one encoder state")
    in_dim, _ = _dims(p, prefix)
    m_enc = enc_stack.shape[-1]
    d = in_dim - m_enc
    x_shape = x_first.shape if isinstance(x_first, Tensor) else np.shape(x_first)
    if d <= 0 or x_shape[-1] != d:
        raise ShapeError(f"attended decoder input dim {in_dim} != x dim {x_shape[-1]} "
                         f"+ context dim {m_enc}")
    enc_proj = nx.matmul(enc_stack, p[f"{att_prefix}.We"])
    x = x_first
    outputs = []
    for _ in range(steps):
        ctx, alpha = nx.additive_attention(h, enc_stack, enc_proj, p[f"{att_prefix}.Wd"],
                                           p[f"{att_prefix}.beta"])
        if alpha_log is not None:
            alpha_log.append(alpha)
        h, c = lstm_step(nx.concat([x, ctx], axis=-1), h, c, p, prefix)
        x = linear(h, p, readout)
        outputs.append(x)
    return outputs


def attention_scores(h_dec: np.ndarray, enc_states: np.ndarray, a: dict,
                     prefix: str = "att") -> np.ndarray:
    """Attention weights for a single decoder state against (T, m) encoder states."""
    enc_states = np.asarray(enc_states, dtype=np.float64)
    if enc_states.ndim != 2 or enc_states.shape[0] == 0:
        raise ShapeError(f"attention needs (T>=1, m) encoder states, got {enc_states.shape}")
    gamma = np.tanh(np.asarray(h_dec) @ a[f"{prefix}.Wd"]
                    + enc_states @ a[f"{prefix}.We"]) @ a[f"{prefix}.beta"]
    z = np.exp(gamma - gamma.max())
    return z / z.sum()
