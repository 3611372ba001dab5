"""Window and corpus losses as plain numpy reductions."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..numerics import ShapeError


def window_loss(pred, target) -> float:
    """Mean over the T steps of the squared norm of each step's residual."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 2:
        raise ShapeError(f"window_loss: shapes {pred.shape} and {target.shape} must be equal (T, d)")
    r = pred - target
    return float((r * r).sum(axis=1).mean())


def window_losses(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Batched :func:`window_loss` over (B, T, d) arrays."""
    if pred.shape != target.shape or pred.ndim != 3:
        raise ShapeError(f"window_losses: shapes {pred.shape} and {target.shape}")
    r = pred - target
    with np.errstate(over="ignore", invalid="ignore"):
        return (r * r).sum(axis=2).mean(axis=1)


def corpus_loss(per_patient: Sequence[Sequence[float]]) -> float:
    """Mean over patients of each patient's mean window loss."""
    if len(per_patient) == 0:
        raise ValueError("corpus_loss needs at least one patient")
    means = []
    for i, losses in enumerate(per_patient):
        if len(losses) == 0:
            raise ValueError(f"patient {i} has no windows")
        means.append(float(np.mean(losses)))
    return float(np.mean(means))


def patient_weights(patient_index: np.ndarray) -> np.ndarray:
    """Per-window weights ``1 / (N * L_i)`` that turn a weighted sum into corpus_loss."""
    _, inverse, counts = np.unique(patient_index, return_inverse=True, return_counts=True)
    return 1.0 / (len(counts) * counts[inverse])
