"""Training protocol: batching, early stopping and grid search."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .models import ITERATIVE_KINDS, MODEL_KINDS, build_model, corpus_loss, model_from_config
from .models.losses import window_losses
from .numerics import Adam, NonFiniteError, Tape, load_checkpoint, save_checkpoint
from .preprocess.records import GridMatrix
from .preprocess.windows import window_array

log = logging.getLogger(__name__)


@dataclass
class PatientWindows:
    patient_id: str
    inputs: np.ndarray     # (n, T, d)
    targets: np.ndarray    # (n, T, d)
    end_times: np.ndarray  # (n,)


def make_training_windows(grids: dict[str, GridMatrix], patient_ids, T: int,
                          target: str) -> list[PatientWindows]:
    """Stride-1 windows with reconstruction (``past``) or forecast (``future``) targets.

    Forecast windows need T further hours, so they end at ``T..L-T``.
    Patients without a single window are skipped.
    """
    out = []
    for pid in patient_ids:
        vals = grids[pid].values
        L = vals.shape[0]
        if target == "past":
            w = window_array(vals, T)
            inputs, targets = w, w
        elif target == "future":
            w = window_array(vals, T)
            inputs, targets = w[: max(L - 2 * T + 1, 0)], w[T:]
        else:
            raise ValueError(f"target must be 'past' or 'future', got {target!r}")
        if len(inputs) == 0:
            continue
        out.append(PatientWindows(pid, inputs, targets,
                                  np.arange(T, T + len(inputs))))
    return out


@dataclass
class TrainConfig:
    kind: str
    m: int = 94
    T: int = 12
    lr_grid: tuple[float, ...] = (1e-3,)
    activation_grid: tuple[str, ...] = ("tanh",)
    hidden: tuple[int, ...] = (64,)
    max_epochs: int = 200
    patience: int = 10
    batch_patients: int = 4
    batch_records: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if not self.lr_grid or not self.activation_grid:
            raise ValueError("hyper-parameter grids must be non-empty")


@dataclass
class TrainLog:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    initial_train_loss: float = float("nan")
    initial_val_loss: float = float("nan")
    stop_epoch: int = 0
    best_epoch: int = 0

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1]

    def to_tsv(self) -> str:
        lines = [f"#stop_epoch={self.stop_epoch}\tbest_epoch={self.best_epoch}",
                 "epoch\ttrain_loss\tval_loss",
                 f"0\t{self.initial_train_loss!r}\t{self.initial_val_loss!r}"]
        lines += [f"{i}\t{a!r}\t{b!r}" for i, (a, b) in
                  enumerate(zip(self.train_loss, self.val_loss), start=1)]
        return "\n".join(lines) + "\n"


@dataclass
class Checkpoint:
    kind: str
    config: dict
    params: dict[str, np.ndarray]

    def model(self):
        return model_from_config(self.config)

    def save(self, path) -> Path:
        return save_checkpoint(path, self.kind, self.config, self.params)

    @classmethod
    def load(cls, path) -> Checkpoint:
        kind, config, params = load_checkpoint(path)
        return cls(kind, config, params)


def early_stop(val_losses: list[float], patience: int = 10) -> bool:
    """True once the last ``patience`` epoch-over-epoch changes are all >= 0."""
    if len(val_losses) < patience + 1:
        return False
    tail = np.asarray(val_losses[-(patience + 1):], dtype=np.float64)
    return bool(np.all(np.diff(tail) >= 0))


class EarlyStopper:
    """Tracks the best epoch and decides when to stop."""

    def __init__(self, patience: int):
        self.patience = patience
        self.history: list[float] = []
        self.best_epoch = 0
        self.best_state = None

    def update(self, val_loss: float, state=None) -> bool:
        self.history.append(float(val_loss))
        if self.best_epoch == 0 or val_loss < self.history[self.best_epoch - 1]:
            self.best_epoch = len(self.history)
            self.best_state = state
        return early_stop(self.history, self.patience)


def evaluate_corpus_loss(model, params, data: list[PatientWindows], chunk: int = 8192) -> float:
    """Patient-weighted mean window loss without recording a tape."""
    if not data:
        raise ValueError("no windows to evaluate")
    inputs = np.concatenate([p.inputs for p in data])
    targets = np.concatenate([p.targets for p in data])
    losses = np.concatenate([
        window_losses(model.predict(params, inputs[i:i + chunk]), targets[i:i + chunk])
        for i in range(0, len(inputs), chunk)])
    bounds = np.cumsum([len(p.inputs) for p in data])[:-1]
    return corpus_loss(np.split(losses, bounds))


def _s2s_batches(data, rng, batch_patients):
    order = rng.permutation(len(data))
    for start in range(0, len(order), batch_patients):
        chosen = [data[i] for i in order[start:start + batch_patients]]
        weights = np.concatenate([np.full(len(p.inputs), 1.0 / (len(chosen) * len(p.inputs)))
                                  for p in chosen])
        yield (np.concatenate([p.inputs for p in chosen]),
               np.concatenate([p.targets for p in chosen]), weights, len(chosen))


def _record_batches(inputs, targets, rng, batch_records):
    order = rng.permutation(len(inputs))
    for start in range(0, len(order), batch_records):
        idx = order[start:start + batch_records]
        yield inputs[idx], targets[idx], np.full(len(idx), 1.0 / len(idx)), len(idx)


def _check_data(train_data, val_data):
    if not train_data or not val_data:
        raise ValueError("training and validation sets must both be non-empty")


def train(kind: str, train_data: list[PatientWindows], val_data: list[PatientWindows],
          config: TrainConfig, lr: float | None = None, activation: str | None = None,
          ) -> tuple[Checkpoint, TrainLog]:
    """Fit one model at one hyper-parameter point and return its best-validation checkpoint."""
    _check_data(train_data, val_data)
    d = train_data[0].inputs.shape[2]
    lr = config.lr_grid[0] if lr is None else lr
    activation = config.activation_grid[0] if activation is None else activation
    options = {"hidden": config.hidden, "activation": activation} if kind == "ae" else {}
    model = build_model(kind, d, config.m, config.T, **options)
    tlog = TrainLog()

    if kind == "pca":
        params = model.fit(np.concatenate([p.inputs for p in train_data]))
        tlog.train_loss.append(evaluate_corpus_loss(model, params, train_data))
        tlog.val_loss.append(evaluate_corpus_loss(model, params, val_data))
        tlog.stop_epoch = tlog.best_epoch = 1
        return Checkpoint(kind, model.config(), params), tlog

    params = model.init_params(config.seed)
    opt = Adam(lr=lr)
    tlog.initial_train_loss = evaluate_corpus_loss(model, params, train_data)
    tlog.initial_val_loss = evaluate_corpus_loss(model, params, val_data)
    stopper = EarlyStopper(config.patience)
    if kind == "ae":
        flat_in = np.concatenate([p.inputs for p in train_data])
        flat_tg = np.concatenate([p.targets for p in train_data])
    for epoch in range(1, config.max_epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        if kind == "ae":
            batches = _record_batches(flat_in, flat_tg, rng, config.batch_records)
            total = len(flat_in)
        else:
            batches = _s2s_batches(train_data, rng, config.batch_patients)
            total = len(train_data)
        running = 0.0
        for inputs, targets, weights, count in batches:
            with Tape() as tape:
                leaves = tape.watch(params)
                loss = model.loss(leaves, inputs, targets, weights)
                grads = tape.backward(loss, leaves)
            running += loss.item() * count / total
            params = opt.step(params, grads)
        val = evaluate_corpus_loss(model, params, val_data)
        if not np.isfinite(running) or not np.isfinite(val):
            raise NonFiniteError(f"{kind}: non-finite loss at epoch {epoch}")
        tlog.train_loss.append(running)
        tlog.val_loss.append(val)
        log.debug("%s epoch %d train %.5f val %.5f", kind, epoch, running, val)
        if stopper.update(val, params):
            break
    tlog.stop_epoch = len(tlog.val_loss)
    tlog.best_epoch = stopper.best_epoch
    return Checkpoint(kind, model.config(), stopper.best_state), tlog


@dataclass
class GridPoint:
    lr: float
    activation: str
    best_val_loss: float
    checkpoint: Checkpoint | None = None
    log: TrainLog | None = None


def grid_search(train_data, val_data, config: TrainConfig):
    """Train every (learning rate, activation) point; lowest best-validation loss wins.

    Ties go to the earlier point in grid order. Diverged points score ``inf``.
    Activations only apply to the AE; other kinds search the learning rate only.
    """
    acts = config.activation_grid if config.kind == "ae" else config.activation_grid[:1]
    lrs = config.lr_grid if config.kind != "pca" else config.lr_grid[:1]
    points = []
    for lr, act in itertools.product(lrs, acts):
        try:
            ckpt, tlog = train(config.kind, train_data, val_data, config, lr=lr, activation=act)
            points.append(GridPoint(lr, act, tlog.best_val_loss, ckpt, tlog))
        except NonFiniteError as exc:
            log.warning("grid point lr=%g activation=%s diverged: %s", lr, act, exc)
            points.append(GridPoint(lr, act, float("inf")))
    finite = [p for p in points if np.isfinite(p.best_val_loss)]
    if not finite:
        raise NonFiniteError(f"{config.kind}: every grid point diverged")
    best = min(finite, key=lambda p: p.best_val_loss)
    return best, points


def select_best(losses: list[float]) -> int:
    """Index of the minimum loss, earliest on ties."""
    return int(np.argmin(np.asarray(losses)))


def with_kind(config: TrainConfig, kind: str) -> TrainConfig:
    return replace(config, kind=kind)


__all__ = [
    "Checkpoint", "EarlyStopper", "GridPoint", "ITERATIVE_KINDS", "PatientWindows",
    "TrainConfig", "TrainLog", "early_stop", "evaluate_corpus_loss", "grid_search",
    "make_training_windows", "select_best", "train", "with_kind",
]
