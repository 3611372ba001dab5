"""Fully connected autoencoder over flattened (T * d) windows."""

from __future__ import annotations

import numpy as np

from .. import numerics as nx
from ..numerics import ShapeError, Tensor
from .lstm import init_linear, linear

ACTIVATIONS = {"tanh": nx.tanh, "sigmoid": nx.sigmoid, "relu": nx.relu}


class MlpAutoencoder:
    kind = "ae"
    target = "past"

    def __init__(self, d: int, m: int, T: int, hidden: tuple[int, ...] = (64,),
                 activation: str = "tanh"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {sorted(ACTIVATIONS)}")
        self.d, self.m, self.T = d, m, T
        self.hidden = tuple(int(h) for h in hidden)
        self.activation = activation
        D = T * d
        self.enc_sizes = [D, *self.hidden, m]
        self.dec_sizes = [m, *reversed(self.hidden), D]

    def config(self) -> dict:
        return {"kind": self.kind, "d": self.d, "m": self.m, "T": self.T,
                "hidden": list(self.hidden), "activation": self.activation}

    def init_params(self, seed: int) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        params = {}
        for part, sizes in (("enc", self.enc_sizes), ("dec", self.dec_sizes)):
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
                params.update(init_linear(rng, f"{part}.{i}", a, b))
        return params

    def _mlp(self, x, P, part: str, sizes: list[int]):
        act = ACTIVATIONS[self.activation]
        n = len(sizes) - 1
        for i in range(n):
            x = linear(x, P, f"{part}.{i}")
            if i < n - 1:
                x = act(x)
        return x

    def ae_forward(self, x, P: dict) -> tuple[Tensor, Tensor]:
        shape = x.shape if isinstance(x, Tensor) else np.shape(x)
        if shape[-1] != self.T * self.d:
            raise ShapeError(f"ae expects flat inputs of size {self.T * self.d}, got {shape}")
        e = self._mlp(x, P, "enc", self.enc_sizes)
        return e, self._mlp(e, P, "dec", self.dec_sizes)

    def _flat(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 3 or inputs.shape[1:] != (self.T, self.d):
            raise ShapeError(f"ae expects windows of shape (B, {self.T}, {self.d}), "
                             f"got {inputs.shape}")
        return inputs.reshape(inputs.shape[0], -1)

    def loss(self, P: dict, inputs: np.ndarray, targets: np.ndarray,
             weights: np.ndarray) -> Tensor:
        x = self._flat(inputs)
        _, xhat = self.ae_forward(x, P)
        return nx.weighted_sse(xhat, self._flat(targets), np.asarray(weights) / self.T)

    def encode(self, params: dict, inputs: np.ndarray) -> np.ndarray:
        return self.ae_forward(self._flat(inputs), params)[0].data

    def predict(self, params: dict, inputs: np.ndarray) -> np.ndarray:
        out = self.ae_forward(self._flat(inputs), params)[1].data
        return out.reshape(-1, self.T, self.d)


def ae_forward(x, model: MlpAutoencoder, params: dict):
    return model.ae_forward(x, params)
