"""Dense float64 tensors with a tape for reverse-mode differentiation.

Ops run eagerly. When a :class:`Tape` is active (``with Tape() as tape:``)
and at least one operand descends from a watched parameter, the op is
appended to the tape; otherwise it only computes its value.

Elementwise ops follow numpy broadcasting; the backward pass sums gradients
back onto the operand's shape.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Sequence

import numpy as np

from .. import kernels


class ShapeError(ValueError):
    """Operand shapes do not conform to the op."""


class NonFiniteError(FloatingPointError):
    """An op or gradient produced NaN or Inf."""


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "_tape", "_index")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if type(data) is not np.ndarray or data.dtype != np.float64:
            data = np.asarray(data, dtype=np.float64)
        self.data = data
        self.requires_grad = requires_grad
        self.name = name
        self._tape: Tape | None = None
        self._index: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


class _Node:
    __slots__ = ("kind", "inputs", "output", "backward")

    def __init__(self, kind, inputs, output, backward):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.backward = backward


_local = threading.local()


def _active_tape() -> Tape | None:
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Ordered record of ops; one tape per thread at a time."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> Tape:
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def watch(self, params: dict[str, np.ndarray]) -> dict[str, Tensor]:
        """Wrap parameter arrays as differentiable leaves of this tape."""
        leaves = {}
        for name, value in params.items():
            t = Tensor(value, requires_grad=True, name=name)
            t._tape = self
            leaves[name] = t
        return leaves

    def backward(self, loss: Tensor, wrt: dict[str, Tensor]) -> dict[str, np.ndarray]:
        """Gradient of the scalar ``loss`` w.r.t. every tensor in ``wrt``.

        Leaves that did not take part get zero gradients. The tape is left
        untouched, so calling this twice gives identical results.
        """
        if loss._tape is not self or loss._index is None:
            raise ValueError("loss was not produced on this tape")
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        pending: dict[int, np.ndarray] = {loss._index: np.ones_like(loss.data)}
        leaf_grads: dict[int, np.ndarray] = {}
        for idx in range(loss._index, -1, -1):
            g = pending.pop(idx, None)
            if g is None:
                continue
            node = self.nodes[idx]
            needs = [t.requires_grad for t in node.inputs]
            for t, gi in zip(node.inputs, node.backward(g, needs)):
                if gi is None or not t.requires_grad:
                    continue
                if t._index is not None:
                    prev = pending.get(t._index)
                    pending[t._index] = gi if prev is None else prev + gi
                else:
                    prev = leaf_grads.get(id(t))
                    leaf_grads[id(t)] = gi if prev is None else prev + gi
        out = {}
        for name, t in wrt.items():
            g = leaf_grads.get(id(t))
            out[name] = np.zeros_like(t.data) if g is None else g
        return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(kind: str, inputs: Sequence[Tensor], data: np.ndarray,
            backward: Callable) -> Tensor:
    # A single NaN or Inf anywhere makes the sum non-finite.
    if not math.isfinite(data.sum()):
        raise NonFiniteError(f"{kind} produced non-finite values")
    out = Tensor(data)
    tape = _active_tape()
    if tape is not None and any([t.requires_grad for t in inputs]):
        out.requires_grad = True
        out._tape = tape
        out._index = len(tape.nodes)
        tape.nodes.append(_Node(kind, tuple(inputs), out, backward))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(kind, a, b):
    if a.data.shape == b.data.shape:
        return a.data.shape
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g, needs):
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(g, b.shape) if needs[1] else None)

    return _record("add", (a, b), a.data + b.data, backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g, needs):
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(-g, b.shape) if needs[1] else None)

    return _record("sub", (a, b), a.data - b.data, backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g, needs):
        return (_unbroadcast(g * b.data, a.shape) if needs[0] else None,
                _unbroadcast(g * a.data, b.shape) if needs[1] else None)

    return _record("mul", (a, b), a.data * b.data, backward)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    y = np.tanh(a.data)
    return _record("tanh", (a,), y, lambda g, needs: (g * (1.0 - y * y),))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    y = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    return _record("sigmoid", (a,), y, lambda g, needs: (g * y * (1.0 - y),))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    pos = a.data > 0
    return _record("relu", (a,), np.where(pos, a.data, 0.0), lambda g, needs: (g * pos,))


def softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g, needs):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _record("softmax", (a,), s, backward)


# -- linear algebra and shape ops --------------------------------------------

def matmul(a, b) -> Tensor:
    """``a @ b`` with ``a`` of shape (..., k) and ``b`` of shape (k, n) or (k,)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 1 or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    k = b.shape[0]

    def backward(g, needs):
        ga = gb = None
        if needs[0]:
            ga = g @ b.data.T if b.ndim == 2 else g[..., None] * b.data
        if needs[1]:
            a2 = a.data.reshape(-1, k)
            g2 = g.reshape(-1, b.shape[1]) if b.ndim == 2 else g.reshape(-1)
            gb = a2.T @ g2
        return ga, gb

    return _record("matmul", (a, b), a.data @ b.data, backward)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: no operands")
    ax = axis % ts[0].ndim
    ref = ts[0].shape
    for t in ts[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat: shapes {[t.shape for t in ts]} differ off axis {axis}")
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def backward(g, needs):
        return tuple(np.split(g, bounds, axis=ax))

    return _record("concat", ts, np.concatenate([t.data for t in ts], axis=ax), backward)


def slice_(a, start: int, stop: int, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    ax = axis % a.ndim
    if not 0 <= start < stop <= a.shape[ax]:
        raise ShapeError(f"slice: [{start}:{stop}] out of range for shape {a.shape} axis {axis}")
    sel = [slice(None)] * a.ndim
    sel[ax] = slice(start, stop)
    sel = tuple(sel)

    def backward(g, needs):
        full = np.zeros_like(a.data)
        full[sel] = g
        return (full,)

    return _record("slice", (a,), a.data[sel], backward)


def index(a, i: int) -> Tensor:
    """``a[i]`` along the leading axis."""
    a = _as_tensor(a)
    if not -a.shape[0] <= i < a.shape[0]:
        raise ShapeError(f"index: {i} out of range for shape {a.shape}")

    def backward(g, needs):
        full = np.zeros_like(a.data)
        full[i] = g
        return (full,)

    return _record("index", (a,), a.data[i], backward)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts or any(t.shape != ts[0].shape for t in ts):
        raise ShapeError(f"stack: shapes {[t.shape for t in ts]} differ")

    def backward(g, needs):
        return tuple(np.take(g, k, axis=axis) for k in range(len(ts)))

    return _record("stack", ts, np.stack([t.data for t in ts], axis=axis), backward)


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}") from None
    return _record("reshape", (a,), out, lambda g, needs: (g.reshape(a.shape),))


def sum_(a, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)

    def backward(g, needs):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _record("sum", (a,), np.asarray(a.data.sum(axis=axis)), backward)


# -- losses ------------------------------------------------------------------

def mse(pred, target) -> Tensor:
    """Mean of squared differences over all entries."""
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse: shapes {pred.shape} and {target.shape} differ")
    r = pred.data - target.data
    n = r.size

    def backward(g, needs):
        gp = (2.0 / n) * g * r
        return (gp if needs[0] else None, -gp if needs[1] else None)

    return _record("mse", (pred, target), np.asarray((r * r).mean()), backward)


def weighted_sse(pred, target, weights: np.ndarray) -> Tensor:
    """``sum(w * ||pred - target||^2)`` with the norm over the last axis.

    ``weights`` is a constant of shape ``pred.shape[:-1]``.
    """
    pred, target = _as_tensor(pred), _as_tensor(target)
    w = np.asarray(weights, dtype=np.float64)
    if pred.shape != target.shape or w.shape != pred.shape[:-1]:
        raise ShapeError(f"weighted_sse: pred {pred.shape}, target {target.shape}, "
                         f"weights {w.shape}")
    # overflow surfaces as NonFiniteError from _record
    with np.errstate(over="ignore", invalid="ignore"):
        r = pred.data - target.data
        wr = w[..., None] * r
        total = np.asarray((wr * r).sum())

    def backward(g, needs):
        gp = 2.0 * g * wr
        return (gp if needs[0] else None, -gp if needs[1] else None)

    return _record("weighted_sse", (pred, target), total, backward)


def logistic_loss(logits, labels: np.ndarray, weights: np.ndarray) -> Tensor:
    """``sum(w * (softplus(z) - y z))``: weighted binary cross-entropy on logits."""
    z = _as_tensor(logits)
    y = np.asarray(labels, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if y.shape != z.shape or w.shape != z.shape:
        raise ShapeError(f"logistic_loss: logits {z.shape}, labels {y.shape}, weights {w.shape}")
    softplus = np.logaddexp(0.0, z.data)
    p = 0.5 * (np.tanh(0.5 * z.data) + 1.0)

    def backward(g, needs):
        return (g * w * (p - y),)

    return _record("logistic_loss", (z,), np.asarray((w * (softplus - y * z.data)).sum()),
                   backward)


# -- fused LSTM gates --------------------------------------------------------

def lstm_gates(pre, c_prev) -> Tensor:
    """Fused gate block of an LSTM step.

    ``pre`` is (B, 4m) in gate order input, forget, candidate, output;
    ``c_prev`` is (B, m). Returns ``[h | c]`` of shape (B, 2m).
    """
    pre, c_prev = _as_tensor(pre), _as_tensor(c_prev)
    if pre.ndim != 2 or c_prev.ndim != 2 or pre.shape != (c_prev.shape[0], 4 * c_prev.shape[1]):
        raise ShapeError(f"lstm_gates: pre {pre.shape} and cell {c_prev.shape} do not conform")
    hc, gates = kernels.lstm_gates_forward(pre.data, c_prev.data)

    def backward(g, needs):
        d_pre, d_c = kernels.lstm_gates_backward(g, gates, c_prev.data)
        return d_pre, d_c

    return _record("lstm_gates", (pre, c_prev), hc, backward)


def forward_op(kind: str, operands: Sequence, **kwargs) -> Tensor:
    """Dispatch a primitive by name."""
    table = {
        "matmul": matmul, "add": add, "sub": sub, "elementwise-mul": mul, "mul": mul,
        "tanh": tanh, "sigmoid": sigmoid, "relu": relu, "softmax": softmax,
        "concat": lambda *ts, **kw: concat(ts, **kw), "slice": slice_,
        "stack": lambda *ts, **kw: stack(ts, **kw), "mse": mse, "sum": sum_,
    }
    if kind not in table:
        raise ValueError(f"unknown op kind {kind!r}")
    return table[kind](*operands, **kwargs)


def lstm_cell(x, h, c, Wx, Wh, b) -> Tensor:
    """A whole LSTM step as one tape node: ``[h' | c']`` of shape (B, 2m).

    Equivalent to ``lstm_gates(x @ Wx + h @ Wh + b, c)``.
    """
    x, h, c, Wx, Wh, b = (_as_tensor(v) for v in (x, h, c, Wx, Wh, b))
    m = c.shape[-1] if c.ndim == 2 else -1
    if (x.ndim != 2 or h.ndim != 2 or c.ndim != 2 or Wx.shape != (x.shape[1], 4 * m)
            or Wh.shape != (m, 4 * m) or b.shape != (4 * m,) or h.shape != c.shape
            or x.shape[0] != h.shape[0]):
        raise ShapeError(f"lstm_cell: x {x.shape}, h {h.shape}, c {c.shape}, Wx {Wx.shape}, "
                         f"Wh {Wh.shape}, b {b.shape} do not conform")
    pre = x.data @ Wx.data + h.data @ Wh.data + b.data
    hc, gates = kernels.lstm_gates_forward(pre, c.data)

    def backward(g, needs):
        d_pre, d_c = kernels.lstm_gates_backward(g, gates, c.data)
        return (d_pre @ Wx.data.T if needs[0] else None,
                d_pre @ Wh.data.T if needs[1] else None,
                d_c if needs[2] else None,
                x.data.T @ d_pre if needs[3] else None,
                h.data.T @ d_pre if needs[4] else None,
                d_pre.sum(axis=0) if needs[5] else None)

    return _record("lstm_cell", (x, h, c, Wx, Wh, b), hc, backward)


def lstm_sequence(x, Wx, Wh, b) -> Tensor:
    """A whole LSTM layer unrolled from a zero state as one tape node.

    ``x`` is time-major (L, B, k). Returns ``[h_t | c_t]`` for every step,
    shape (L, B, 2m). Backward runs truncation-free BPTT over the stored gates.
    """
    x, Wx, Wh, b = (_as_tensor(v) for v in (x, Wx, Wh, b))
    m = Wh.shape[0] if Wh.ndim == 2 else -1
    if (x.ndim != 3 or x.shape[0] == 0 or Wx.shape != (x.shape[2], 4 * m)
            or Wh.shape != (m, 4 * m) or b.shape != (4 * m,)):
        raise ShapeError(f"lstm_sequence: x {x.shape}, Wx {Wx.shape}, Wh {Wh.shape}, "
                         f"b {b.shape} do not conform")
    L, B, k = x.shape
    xp = (x.data.reshape(L * B, k) @ Wx.data).reshape(L, B, 4 * m) + b.data
    out, gates = kernels.lstm_sequence_forward(xp, Wh.data)

    def backward(g, needs):
        flat = kernels.lstm_sequence_backward(g, gates, out, Wh.data).reshape(L * B, 4 * m)
        h_prev = np.concatenate([np.zeros((1, B, m)), out[:-1, :, :m]]).reshape(L * B, m)
        return ((flat @ Wx.data.T).reshape(L, B, k) if needs[0] else None,
                x.data.reshape(L * B, k).T @ flat if needs[1] else None,
                h_prev.T @ flat if needs[2] else None,
                flat.sum(axis=0) if needs[3] else None)

    return _record("lstm_sequence", (x, Wx, Wh, b), out, backward)


def additive_attention(h, enc, enc_proj, Wd, beta):
    """``tanh(enc_proj + h @ Wd) @ beta`` scores, softmax over time, weighted sum of ``enc``.

    ``enc`` and ``enc_proj`` are (T, B, m); ``h`` is (B, m). Returns the
    context Tensor (B, m) and the weights (T, B) as a plain array.
    """
    h, enc, enc_proj, Wd, beta = (_as_tensor(v) for v in (h, enc, enc_proj, Wd, beta))
    if (enc.ndim != 3 or enc_proj.shape != enc.shape or h.ndim != 2
            or h.shape[0] != enc.shape[1] or Wd.shape != (h.shape[1], enc.shape[2])
            or beta.shape != (enc.shape[2],)):
        raise ShapeError(f"attention: h {h.shape}, enc {enc.shape}, proj {enc_proj.shape}, "
                         f"Wd {Wd.shape}, beta {beta.shape} do not conform")
    act = np.tanh(enc_proj.data + h.data @ Wd.data)
    scores = act @ beta.data
    z = np.exp(scores - scores.max(axis=0, keepdims=True))
    alpha = z / z.sum(axis=0, keepdims=True)
    ctx = np.einsum("tb,tbj->bj", alpha, enc.data)

    def backward(g, needs):
        d_alpha = np.einsum("bj,tbj->tb", g, enc.data)
        d_scores = alpha * (d_alpha - (alpha * d_alpha).sum(axis=0, keepdims=True))
        d_z = d_scores[:, :, None] * beta.data * (1.0 - act * act)
        d_q = d_z.sum(axis=0)
        return (d_q @ Wd.data.T if needs[0] else None,
                alpha[:, :, None] * g if needs[1] else None,
                d_z if needs[2] else None,
                h.data.T @ d_q if needs[3] else None,
                np.einsum("tb,tbj->j", d_scores, act) if needs[4] else None)

    return _record("attention", (h, enc, enc_proj, Wd, beta), ctx, backward), alpha
