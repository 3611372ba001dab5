"""Central finite differences, kept independent of the tape."""

from __future__ import annotations

from typing import Callable

import numpy as np


def numeric_gradient(f: Callable[[dict[str, np.ndarray]], float],
                     params: dict[str, np.ndarray], step: float = 1e-5,
                     ) -> dict[str, np.ndarray]:
    grads = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f(params)
            flat[i] = orig - step
            down = f(params)
            flat[i] = orig
            g.reshape(-1)[i] = (up - down) / (2.0 * step)
        grads[name] = g
    return grads


def max_relative_error(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray],
                       floor: float = 1e-6) -> float:
    """Largest ``|a - n| / max(|a|, |n|, floor)`` over every entry."""
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        if a.size:
            worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst
