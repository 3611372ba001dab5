"""Representation models and a small registry keyed by model kind."""

from __future__ import annotations

import numpy as np

from .ae import ACTIVATIONS, MlpAutoencoder, ae_forward
from .losses import corpus_loss, patient_weights, window_loss, window_losses
from .lstm import (
    attention_scores, decode, decode_attended, lstm_step, lstm_step_gated, lstm_step_unfused,
    run_encoder, run_encoder_stepwise, run_layer,
)
from .pca import PcaModel, RankError, pca_decode, pca_encode, pca_fit
from .s2s import S2S_KINDS, Seq2Seq

MODEL_KINDS = ("pca", "ae", "s2s_ae", "s2s_f", "s2s_f_a")
ITERATIVE_KINDS = ("ae",) + S2S_KINDS


class PcaRepresentation:
    """Adapter giving :class:`PcaModel` the same surface as the trained models."""

    kind = "pca"
    target = "past"

    def __init__(self, d: int, m: int, T: int):
        self.d, self.m, self.T = d, m, T

    def config(self) -> dict:
        return {"kind": "pca", "d": self.d, "m": self.m, "T": self.T}

    def fit(self, inputs: np.ndarray) -> dict[str, np.ndarray]:
        model = pca_fit(np.asarray(inputs).reshape(len(inputs), -1), self.m)
        return {"mean": model.mean, "components": model.components,
                "eigenvalues": model.eigenvalues}

    @staticmethod
    def _model(params) -> PcaModel:
        return PcaModel(params["mean"], params["components"], params["eigenvalues"])

    def encode(self, params: dict, inputs: np.ndarray) -> np.ndarray:
        return self._model(params).encode(np.asarray(inputs).reshape(len(inputs), -1))

    def predict(self, params: dict, inputs: np.ndarray) -> np.ndarray:
        flat = np.asarray(inputs).reshape(len(inputs), -1)
        model = self._model(params)
        return model.decode(model.encode(flat)).reshape(-1, self.T, self.d)


def build_model(kind: str, d: int, m: int, T: int, **options):
    if kind == "pca":
        return PcaRepresentation(d, m, T)
    if kind == "ae":
        return MlpAutoencoder(d, m, T, **options)
    if kind in S2S_KINDS:
        return Seq2Seq(kind, d, m, T)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def model_from_config(config: dict):
    cfg = dict(config)
    kind = cfg.pop("kind")
    if "hidden" in cfg:
        cfg["hidden"] = tuple(cfg["hidden"])
    return build_model(kind, **cfg)


def count_parameters(params: dict[str, np.ndarray], kind: str) -> int:
    """Learned parameter count; PCA counts its projection and mean only."""
    if kind == "pca":
        return int(params["components"].size + params["mean"].size)
    return int(sum(v.size for v in params.values()))


__all__ = [
    "ACTIVATIONS", "ITERATIVE_KINDS", "MODEL_KINDS", "MlpAutoencoder", "PcaModel",
    "PcaRepresentation", "RankError", "S2S_KINDS", "Seq2Seq", "ae_forward",
    "attention_scores", "build_model", "corpus_loss", "count_parameters", "decode",
    "decode_attended", "lstm_step", "lstm_step_gated", "lstm_step_unfused", "model_from_config",
    "patient_weights", "pca_decode", "pca_encode", "pca_fit", "run_encoder",
    "run_encoder_stepwise", "run_layer",
    "window_loss", "window_losses",
]
