"""Adaptive-moment (Adam) parameter updates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import NonFiniteError


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Return updated copies of ``params``; moments are updated first."""
        if set(params) != set(grads):
            raise KeyError(f"gradient keys {sorted(grads)} != parameter keys {sorted(params)}")
        for name in params:
            if not np.isfinite(grads[name]).all():
                raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        out = {}
        for name, p in params.items():
            g = grads[name]
            m = b1 * self.m.get(name, np.zeros_like(p)) + (1.0 - b1) * g
            v = b2 * self.v.get(name, np.zeros_like(p)) + (1.0 - b2) * g * g
            self.m[name], self.v[name] = m, v
            out[name] = p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return out
