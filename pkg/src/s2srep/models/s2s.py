"""Sequence-to-sequence representation learners.

``s2s_ae``  reconstructs the input window, oldest step first.
``s2s_f``   forecasts the T steps after the window.
``s2s_f_a`` forecasts with additive attention over the encoder states.

In all three the decoder starts from the encoder's final ``(h, c)``, takes the
last observed vector as its first input and its own prediction afterwards.
The representation is the encoder's final hidden state.
"""

from __future__ import annotations

import numpy as np

from .. import numerics as nx
from ..numerics import ShapeError, Tensor
from .lstm import decode, decode_attended, init_linear, init_lstm, run_encoder

S2S_KINDS = ("s2s_ae", "s2s_f", "s2s_f_a")


class Seq2Seq:
    def __init__(self, kind: str, d: int, m: int, T: int):
        if kind not in S2S_KINDS:
            raise ValueError(f"unknown seq2seq kind {kind!r}")
        if min(d, m, T) < 1:
            raise ValueError(f"d, m, T must be positive, got {d}, {m}, {T}")
        self.kind, self.d, self.m, self.T = kind, d, m, T
        self.attention = kind == "s2s_f_a"
        self.target = "past" if kind == "s2s_ae" else "future"

    def config(self) -> dict:
        return {"kind": self.kind, "d": self.d, "m": self.m, "T": self.T}

    def init_params(self, seed: int) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        d, m = self.d, self.m
        params = init_lstm(rng, "enc", d, m)
        params.update(init_lstm(rng, "dec", d + m if self.attention else d, m))
        params.update(init_linear(rng, "out", m, d))
        if self.attention:
            bound = 1.0 / np.sqrt(m)
            params["att.beta"] = rng.uniform(-bound, bound, (m,))
            params["att.Wd"] = rng.uniform(-bound, bound, (m, m))
            params["att.We"] = rng.uniform(-bound, bound, (m, m))
        return params

    def _check(self, inputs: np.ndarray):
        if inputs.ndim != 3 or inputs.shape[1:] != (self.T, self.d):
            raise ShapeError(f"{self.kind} expects windows of shape (B, {self.T}, {self.d}), "
                             f"got {inputs.shape}")

    def forward(self, P: dict, inputs: np.ndarray, alpha_log: list | None = None):
        """Encoder states (T, B, m) and the list of T decoded (B, d) predictions."""
        inputs = np.asarray(inputs, dtype=np.float64)
        self._check(inputs)
        hs, h, c = run_encoder(inputs, P, "enc")
        x_first = inputs[:, -1]
        if self.attention:
            preds = decode_attended(h, c, x_first, hs, self.T, P, alpha_log=alpha_log)
        else:
            preds = decode(h, c, x_first, self.T, P)
        return hs, preds

    def loss(self, P: dict, inputs: np.ndarray, targets: np.ndarray,
             weights: np.ndarray) -> Tensor:
        """``sum_b weights[b] * window_loss_b``."""
        _, preds = self.forward(P, inputs)
        pred = nx.stack(preds, axis=1)
        w = np.repeat(np.asarray(weights, dtype=np.float64)[:, None] / self.T, self.T, axis=1)
        return nx.weighted_sse(pred, targets, w)

    def encode(self, params: dict, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=np.float64)
        self._check(inputs)
        _, h, _ = run_encoder(inputs, params, "enc")
        return h.data

    def predict(self, params: dict, inputs: np.ndarray) -> np.ndarray:
        _, preds = self.forward(params, inputs)
        return np.stack([p.data for p in preds], axis=1)
