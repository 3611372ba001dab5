"""Standard scaling and stride-1 windowing of grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import GridMatrix, VariableSpec


@dataclass
class Window:
    values: np.ndarray   # (T, d)
    end_time: int        # 1-based hour of the window's last row
    patient_id: str


def _moments(specs: list[VariableSpec]):
    mean = np.array([s.mean for s in specs])
    std = np.array([1.0 if s.constant else s.std for s in specs])
    return mean, std


def scale(grid: GridMatrix, specs: list[VariableSpec]) -> GridMatrix:
    """Per-column ``(x - mean) / std`` from train statistics; constant columns are only centred."""
    mean, std = _moments(specs)
    return GridMatrix(grid.patient_id, (grid.values - mean) / std, grid.mask, grid.variables)


def unscale(grid: GridMatrix, specs: list[VariableSpec]) -> GridMatrix:
    mean, std = _moments(specs)
    return GridMatrix(grid.patient_id, grid.values * std + mean, grid.mask, grid.variables)


def window_array(values: np.ndarray, T: int) -> np.ndarray:
    """All stride-1 windows of a (L, d) array as (L - T + 1, T, d); empty if L < T."""
    L, d = values.shape
    if L < T:
        return np.empty((0, T, d))
    return np.lib.stride_tricks.sliding_window_view(values, T, axis=0).transpose(0, 2, 1).copy()


def windows(grid: GridMatrix, T: int) -> list[Window]:
    arr = window_array(grid.values, T)
    return [Window(arr[k], T + k, grid.patient_id) for k in range(arr.shape[0])]
