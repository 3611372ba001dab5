"""PCA as a linear autoencoder over flattened windows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import ShapeError


class RankError(ValueError):
    """Training data has too little variance for the requested components."""


@dataclass
class PcaModel:
    mean: np.ndarray          # (D,)
    components: np.ndarray    # (m, D), orthonormal rows
    eigenvalues: np.ndarray   # (D,), descending, 1/n-normalised covariance

    @property
    def m(self) -> int:
        return self.components.shape[0]

    def encode(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) - self.mean) @ self.components.T

    def decode(self, e: np.ndarray) -> np.ndarray:
        return np.asarray(e) @ self.components + self.mean


def pca_fit(x: np.ndarray, m: int) -> PcaModel:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ShapeError(f"pca_fit needs at least 2 samples of flat vectors, got {x.shape}")
    n, D = x.shape
    if not 1 <= m <= D:
        raise ShapeError(f"pca_fit: m={m} must be in [1, {D}]")
    mean = x.mean(axis=0)
    centred = x - mean
    if n >= D:
        _, s, vt = np.linalg.svd(centred, full_matrices=False)
        eig = s * s / n
    else:
        # Fewer samples than dimensions: the thin SVD would not span R^D.
        w, v = np.linalg.eigh(centred.T @ centred / n)
        eig, vt = np.clip(w[::-1], 0.0, None), v[:, ::-1].T
    if eig[0] <= 1e-24 * max(1.0, np.abs(x).max()) ** 2:
        raise RankError("pca_fit: training data has no variance (all samples identical)")
    comps = vt[:m].copy()
    # Deterministic sign: largest-magnitude loading of each direction is positive.
    flip = np.sign(comps[np.arange(m), np.abs(comps).argmax(axis=1)])
    comps *= flip[:, None]
    return PcaModel(mean=mean, components=comps, eigenvalues=eig)


def pca_encode(model: PcaModel, x: np.ndarray) -> np.ndarray:
    return model.encode(x)


def pca_decode(model: PcaModel, e: np.ndarray) -> np.ndarray:
    return model.decode(e)
