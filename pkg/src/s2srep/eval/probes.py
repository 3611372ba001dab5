"""Small LSTM probes trained on frozen representations or raw signals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import numerics as nx
from ..models.lstm import init_linear, init_lstm, linear, run_layer
from ..numerics import Adam, NonFiniteError, ShapeError, Tape
from ..train import EarlyStopper


@dataclass
class ProbeConfig:
    signal_hidden: int | None = None    # None: the representation size
    classifier_hidden: int = 64
    lr_grid: tuple[float, ...] = (3e-3,)
    max_epochs: int = 40
    patience: int = 5
    batch_records: int = 512
    batch_patients: int = 16
    min_updates: int = 20       # classifier epochs cycle small label sets up to this many updates
    steps: int = 12
    seed: int = 0

    def __post_init__(self):
        if not self.lr_grid:
            raise ValueError("probe learning-rate grid must be non-empty")
        if self.patience < 1 or self.max_epochs < 1 or self.min_updates < 1:
            raise ValueError("probe patience, max_epochs and min_updates must be positive")


# -- signal probe ------------------------------------------------------------

class SignalProbe:
    """LSTM-1 fed the representation once, then zeros, unrolled ``steps`` times."""

    def __init__(self, in_dim: int, d: int, hidden: int, steps: int = 12):
        self.in_dim, self.d, self.hidden, self.steps = in_dim, d, hidden, steps

    def init_params(self, seed: int) -> dict:
        rng = np.random.default_rng([seed, 101])
        return {**init_lstm(rng, "p", self.in_dim, self.hidden),
                **init_linear(rng, "r", self.hidden, self.d)}

    def forward(self, P, reps) -> nx.Tensor:
        """Predictions shaped (steps, B, d)."""
        reps = np.asarray(reps, dtype=np.float64)
        if reps.ndim != 2 or reps.shape[1] != self.in_dim:
            raise ShapeError(f"signal probe expects (B, {self.in_dim}) inputs, got {reps.shape}")
        steps = np.zeros((self.steps,) + reps.shape)
        steps[0] = reps
        hs, _ = run_layer(steps, P, "p")
        return linear(hs, P, "r")

    def loss(self, P, reps, targets) -> nx.Tensor:
        """Mean squared error per entry; ``targets`` is (B, steps, d)."""
        pred = self.forward(P, reps)
        tgt = np.ascontiguousarray(np.asarray(targets).transpose(1, 0, 2))
        w = np.full(tgt.shape[:2], 1.0 / tgt.size)
        return nx.weighted_sse(pred, tgt, w)

    def predict(self, P, reps) -> np.ndarray:
        return self.forward(P, reps).data.transpose(1, 0, 2)


def _epoch_batches(n: int, batch: int, min_updates: int, rng) -> list[np.ndarray]:
    """Shuffled index batches; the set is re-shuffled and repeated to reach ``min_updates``."""
    per_pass = -(-n // batch)
    passes = -(-min_updates // per_pass)
    out = []
    for _ in range(passes):
        order = rng.permutation(n)
        out += [order[i:i + batch] for i in range(0, n, batch)]
    return out


def _mse(probe, P, reps, targets, chunk=8192) -> float:
    total = 0.0
    for i in range(0, len(reps), chunk):
        r = probe.predict(P, reps[i:i + chunk]) - targets[i:i + chunk]
        total += float(np.sum(r * r))
    return total / targets.size


def fit_signal_probe(train_reps, train_targets, select_reps, select_targets,
                     config: ProbeConfig):
    """Train on the first set, pick learning rate and epoch on the second.

    Returns ``(probe, params, selection_mse)``.
    """
    if len(train_reps) == 0 or len(select_reps) == 0:
        raise ValueError("signal probe needs non-empty training and selection windows")
    in_dim = train_reps.shape[1]
    d = train_targets.shape[2]
    if train_targets.shape[1] != config.steps:
        raise ShapeError(f"targets span {train_targets.shape[1]} steps, probe unrolls {config.steps}")
    probe = SignalProbe(in_dim, d, config.signal_hidden or in_dim, config.steps)
    best = None
    for lr in config.lr_grid:
        params = probe.init_params(config.seed)
        opt = Adam(lr=lr)
        stopper = EarlyStopper(config.patience)
        try:
            for epoch in range(1, config.max_epochs + 1):
                rng = np.random.default_rng([config.seed, 211, epoch])
                for idx in _epoch_batches(len(train_reps), config.batch_records, 1, rng):
                    with Tape() as tape:
                        leaves = tape.watch(params)
                        loss = probe.loss(leaves, train_reps[idx], train_targets[idx])
                        grads = tape.backward(loss, leaves)
                    params = opt.step(params, grads)
                if stopper.update(_mse(probe, params, select_reps, select_targets), params):
                    break
        except NonFiniteError:
            continue
        score = stopper.history[stopper.best_epoch - 1]
        if best is None or score < best[1]:
            best = (stopper.best_state, score)
    if best is None:
        raise NonFiniteError("signal probe diverged at every learning rate")
    return probe, best[0], best[1]


# -- sequence classifiers ----------------------------------------------------

@dataclass
class ScoredSequence:
    """One patient's input sequence and the rows that carry a label."""
    patient_id: str
    inputs: np.ndarray      # (L, in_dim)
    positions: np.ndarray   # row indices scored
    labels: np.ndarray      # aligned with positions
    end_times: np.ndarray | None = None   # window end hour of each label


class SequenceClassifier:
    """Stacked LSTM (1 or 3 layers) with a logistic head on every step."""

    def __init__(self, in_dim: int, hidden: int = 64, layers: int = 1):
        if layers not in (1, 3):
            raise ValueError(f"classifier depth must be 1 or 3, got {layers}")
        self.in_dim, self.hidden, self.layers = in_dim, hidden, layers

    def init_params(self, seed: int) -> dict:
        rng = np.random.default_rng([seed, 307])
        p = {}
        for k in range(self.layers):
            p.update(init_lstm(rng, f"l{k}", self.in_dim if k == 0 else self.hidden, self.hidden))
        bound = 1.0 / np.sqrt(self.hidden)
        p["head.W"] = rng.uniform(-bound, bound, (self.hidden,))
        p["head.b"] = np.zeros(1)
        return p

    def logits(self, P, inputs) -> nx.Tensor:
        """Per-step logits shaped (L, B) for padded inputs (B, L, in_dim)."""
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 3 or inputs.shape[2] != self.in_dim:
            raise ShapeError(f"classifier expects (B, L, {self.in_dim}) inputs, got {inputs.shape}")
        seq = np.ascontiguousarray(inputs.transpose(1, 0, 2))
        for k in range(self.layers):
            seq, _ = run_layer(seq, P, f"l{k}")
        return nx.add(nx.matmul(seq, P["head.W"]), P["head.b"])

    def loss(self, P, batch) -> nx.Tensor:
        inputs, labels, weights = batch
        return nx.logistic_loss(self.logits(P, inputs), labels, weights)


def pad_batch(items: list[ScoredSequence]):
    """Zero-pad to a common length; returns inputs (B, L, k), labels and weights (L, B)."""
    B = len(items)
    L = max(len(it.inputs) for it in items)
    k = items[0].inputs.shape[1]
    inputs = np.zeros((B, L, k))
    labels = np.zeros((L, B))
    mask = np.zeros((L, B))
    for b, it in enumerate(items):
        inputs[b, :len(it.inputs)] = it.inputs
        labels[it.positions, b] = it.labels
        mask[it.positions, b] = 1.0
    total = mask.sum()
    if total == 0:
        raise ValueError("batch carries no labelled positions")
    return inputs, labels, mask / total


def score_sequences(clf: SequenceClassifier, P, items: list[ScoredSequence],
                    batch: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Concatenated per-window scores (sigmoid of logits) and labels, in item order."""
    scores, labels = [], []
    for start in range(0, len(items), batch):
        chunk = items[start:start + batch]
        z = clf.logits(P, pad_batch(chunk)[0]).data
        for b, it in enumerate(chunk):
            scores.append(0.5 * (np.tanh(0.5 * z[it.positions, b]) + 1.0))
            labels.append(it.labels)
    return np.concatenate(scores), np.concatenate(labels)


def _sequence_loss(clf, P, items, batch=64) -> float:
    total, count = 0.0, 0
    for start in range(0, len(items), batch):
        inputs, labels, w = pad_batch(items[start:start + batch])
        n = float(np.count_nonzero(w))
        total += clf.loss(P, (inputs, labels, w)).item() * n
        count += n
    return total / count


def fit_classifier(train_items: list[ScoredSequence], select_items: list[ScoredSequence],
                   layers: int, config: ProbeConfig):
    """Logistic-loss training; learning rate and epoch chosen by selection-set loss.

    Returns ``(classifier, params, selection_loss)``.
    """
    if not train_items or not select_items:
        raise ValueError("classifier needs non-empty training and selection sets")
    clf = SequenceClassifier(train_items[0].inputs.shape[1], config.classifier_hidden, layers)
    best = None
    for lr in config.lr_grid:
        params = clf.init_params(config.seed)
        opt = Adam(lr=lr)
        stopper = EarlyStopper(config.patience)
        try:
            for epoch in range(1, config.max_epochs + 1):
                rng = np.random.default_rng([config.seed, 401, epoch])
                for idx in _epoch_batches(len(train_items), config.batch_patients,
                                          config.min_updates, rng):
                    chunk = [train_items[i] for i in idx]
                    batch = pad_batch(chunk)
                    with Tape() as tape:
                        leaves = tape.watch(params)
                        loss = clf.loss(leaves, batch)
                        grads = tape.backward(loss, leaves)
                    params = opt.step(params, grads)
                if stopper.update(_sequence_loss(clf, params, select_items), params):
                    break
        except NonFiniteError:
            continue
        score = stopper.history[stopper.best_epoch - 1]
        if best is None or score < best[1]:
            best = (stopper.best_state, score)
    if best is None:
        raise NonFiniteError("classifier diverged at every learning rate")
    return clf, best[0], best[1]
