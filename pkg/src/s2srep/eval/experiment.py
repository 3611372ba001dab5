"""End-to-end replicate runs: fit representations, probe them, score on test2."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..models import MODEL_KINDS
from ..preprocess import prepare_replicate
from ..preprocess.records import PatientRecord, SplitSpec
from ..train import Checkpoint, TrainConfig, TrainLog, grid_search, make_training_windows
from .datasets import (
    RepresentationDump, raw_sequences, represent, representation_sequences, signal_windows,
)
from .labels import TASKS, label_windows
from .metrics import MetricUndefined, auprc, auroc
from .probes import ProbeConfig, fit_classifier, fit_signal_probe, score_sequences
from .report import Cell

log = logging.getLogger(__name__)

SIGNAL_METRIC = {"past": "mse_reconstruction", "future": "mse_prediction"}
LABEL_CURVE_FRACTIONS = (0.01, 0.02, 0.05, 0.10, 0.25, 0.50, 1.0)
RAW_APPROACH = {1: "raw_lstm1", 3: "raw_lstm3"}


@dataclass
class ExperimentConfig:
    models: tuple[str, ...] = MODEL_KINDS
    m: int = 16
    T: int = 12
    lr_grid: tuple[float, ...] = (3e-3,)
    activation_grid: tuple[str, ...] = ("tanh",)
    hidden: tuple[int, ...] = (64,)
    max_epochs: int = 30
    patience: int = 10
    batch_patients: int = 4
    batch_records: int = 512
    directions: tuple[str, ...] = ("past", "future")
    tasks: tuple[str, ...] = ("discharge", "mortality")
    fractions: tuple[float, ...] = (1.0,)
    raw_layers: tuple[int, ...] = (1, 3)
    # representation approaches probed below 100% labels; None means all models
    curve_models: tuple[str, ...] | None = None
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    seed: int = 0

    def __post_init__(self):
        bad = set(self.models) - set(MODEL_KINDS)
        if bad:
            raise ValueError(f"unknown model kinds {sorted(bad)}")
        if set(self.directions) - set(SIGNAL_METRIC):
            raise ValueError(f"directions must be drawn from {sorted(SIGNAL_METRIC)}")
        if set(self.tasks) - set(TASKS):
            raise ValueError(f"tasks must be drawn from {sorted(TASKS)}")
        if set(self.raw_layers) - set(RAW_APPROACH):
            raise ValueError("raw baselines use 1 or 3 layers")
        if any(not 0 < f <= 1 for f in self.fractions):
            raise ValueError("label fractions must lie in (0, 1]")

    def train_config(self, kind: str) -> TrainConfig:
        return TrainConfig(kind=kind, m=self.m, T=self.T, lr_grid=self.lr_grid,
                           activation_grid=self.activation_grid, hidden=self.hidden,
                           max_epochs=self.max_epochs, patience=self.patience,
                           batch_patients=self.batch_patients,
                           batch_records=self.batch_records, seed=self.seed)


@dataclass
class Selection:
    """A held-out (test1) score used to choose between approaches; never reported."""
    approach: str
    task: str
    metric: str
    fraction: float
    replicate: int
    value: float


@dataclass
class TestScores:
    """Classifier scores on test2 with each window's label and end hour."""
    scores: np.ndarray
    labels: np.ndarray
    end_times: np.ndarray


@dataclass
class ReplicateResult:
    replicate: int
    cells: list[Cell]
    selections: list[Selection]
    train_logs: dict[str, TrainLog]
    checkpoints: dict[str, Checkpoint]
    seconds: dict[str, float]
    test2_scores: dict[tuple[str, str, float], TestScores] = field(default_factory=dict)


def label_subset(patient_ids, fraction: float, seed: int, replicate: int) -> list[str]:
    """Seeded patient-level prefix of a fixed permutation, so subsets nest across fractions."""
    ids = sorted(patient_ids)
    perm = np.random.default_rng([seed, replicate, 53]).permutation(len(ids))
    return [ids[i] for i in perm[: math.ceil(fraction * len(ids) - 1e-9)]]


def _metric_cells(approach, task, fraction, replicate, scores, labels, ids, note=""):
    out = []
    for name, fn in (("auroc", auroc), ("auprc", auprc)):
        try:
            value, why = fn(scores, labels), note
        except MetricUndefined as exc:
            value, why = float("nan"), f"undefined: {exc}"
        out.append(Cell(approach, task, name, fraction, replicate, value, "test2",
                        tuple(ids), why))
    return out


def _unavailable(approach, task, fraction, replicate, note):
    return [Cell(approach, task, m, fraction, replicate, float("nan"), "test2", (), note)
            for m in ("auroc", "auprc")]


def _classify(approach, layers, train_items, test1_items, test2_items, task, fraction,
              replicate, probe_cfg, selections, kept_scores):
    n_pos = sum(int(it.labels.sum()) for it in train_items)
    n_all = sum(len(it.labels) for it in train_items)
    if len(train_items) < 2:
        return _unavailable(approach, task, fraction, replicate,
                            f"only {len(train_items)} labelled patient(s)")
    if n_pos in (0, n_all):
        return _unavailable(approach, task, fraction, replicate, "single-class training labels")
    clf, params, _ = fit_classifier(train_items, test1_items, layers, probe_cfg)
    s1, y1 = score_sequences(clf, params, test1_items)
    try:
        selections.append(Selection(approach, task, "auprc", fraction, replicate, auprc(s1, y1)))
    except MetricUndefined:
        pass
    s2, y2 = score_sequences(clf, params, test2_items)
    kept_scores[(approach, task, fraction)] = TestScores(
        s2, y2, np.concatenate([it.end_times for it in test2_items]))
    return _metric_cells(approach, task, fraction, replicate, s2, y2,
                         [it.patient_id for it in test2_items])


PROBE_ROLES = ("validation", "test1", "test2")


def fit_representation(kind: str, grids, split: SplitSpec, cfg: ExperimentConfig):
    """Grid-searched model fitted on train windows, early-stopped on validation windows."""
    target = "future" if kind in ("s2s_f", "s2s_f_a") else "past"
    train_w = make_training_windows(grids, split.train, cfg.T, target)
    val_w = make_training_windows(grids, split.validation, cfg.T, target)
    best, _ = grid_search(train_w, val_w, cfg.train_config(kind))
    return best.checkpoint, best.log


def represent_roles(checkpoint: Checkpoint, grids, split: SplitSpec, T: int,
                    roles=PROBE_ROLES) -> dict[str, dict[str, RepresentationDump]]:
    model = checkpoint.model()
    return {role: {pid: represent(model, checkpoint.params, grids[pid], T)
                   for pid in split.role(role)} for role in roles}


class ReplicateProber:
    """Probes and classifiers for one replicate, all scored on its test2 patients."""

    def __init__(self, grids, stays: dict[str, tuple[float, str]], split: SplitSpec,
                 cfg: ExperimentConfig):
        self.cfg, self.split, self.r = cfg, split, split.replicate
        self.roles = {role: {pid: grids[pid] for pid in split.role(role)} for role in PROBE_ROLES}
        self.labels = {(role, task): label_windows(self.roles[role], stays, task)
                       for role in PROBE_ROLES for task in cfg.tasks}
        self.subsets = {f: label_subset(split.validation, f, cfg.seed, self.r)
                        for f in cfg.fractions}
        self.selections: list[Selection] = []
        self.test2_scores: dict = {}

    def _items(self, task, role, dumps=None, ids=None):
        ls = self.labels[(role, task)]
        if ids is not None:
            keep = set(ids)
            ls = replace(ls, patients=[p for p in ls.patients if p.patient_id in keep])
        if dumps is None:
            return raw_sequences(self.roles[role], ls)
        return representation_sequences(dumps[role], ls)

    def signal(self, approach: str, dumps) -> list[Cell]:
        cfg, roles, out = self.cfg, self.roles, []
        for direction in cfg.directions:
            sets = [signal_windows(dumps[role], roles[role], direction, cfg.T, cfg.probe.steps)
                    for role in PROBE_ROLES]
            (reps_v, tg_v), (reps_1, tg_1), (reps_2, tg_2) = sets
            probe, params, _ = fit_signal_probe(reps_v, tg_v, reps_1, tg_1, cfg.probe)
            err = probe.predict(params, reps_2) - tg_2
            out.append(Cell(approach, direction, SIGNAL_METRIC[direction], 1.0, self.r,
                            float(np.mean(err * err)), "test2", tuple(roles["test2"])))
        return out

    def classify(self, approach: str, dumps=None, layers: int = 1,
                 fractions=None) -> list[Cell]:
        """LSTM classifiers on representation sequences, or on raw grids when ``dumps`` is None."""
        out = []
        for task in self.cfg.tasks:
            t1 = self._items(task, "test1", dumps)
            t2 = self._items(task, "test2", dumps)
            for f in self.cfg.fractions if fractions is None else fractions:
                tr = self._items(task, "validation", dumps, self.subsets[f])
                out += _classify(approach, layers, tr, t1, t2, task, f, self.r, self.cfg.probe,
                                 self.selections, self.test2_scores)
        return out

    def representation_cells(self, kind: str, dumps, clock=None) -> list[Cell]:
        cfg = self.cfg
        clock = {} if clock is None else clock
        t0 = time.perf_counter()
        cells = self.signal(kind, dumps)
        clock[f"signal:{kind}"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        fracs = cfg.fractions if (cfg.curve_models is None or kind in cfg.curve_models) \
            else tuple(f for f in cfg.fractions if f == 1.0)
        cells += self.classify(kind, dumps, 1, fracs)
        clock[f"classify:{kind}"] = time.perf_counter() - t0
        return cells

    def raw_cells(self, clock=None) -> list[Cell]:
        clock = {} if clock is None else clock
        cells = []
        for layers in self.cfg.raw_layers:
            t0 = time.perf_counter()
            cells += self.classify(RAW_APPROACH[layers], None, layers)
            clock[f"classify:{RAW_APPROACH[layers]}"] = time.perf_counter() - t0
        return cells


def run_replicate(records: list[PatientRecord], table: dict[str, str], split: SplitSpec,
                  cfg: ExperimentConfig) -> ReplicateResult:
    r = split.replicate
    clock = {}
    t0 = time.perf_counter()
    _, grids = prepare_replicate(records, table, split)
    stays = {rec.patient_id: (rec.stay_hours, rec.outcome) for rec in records}
    prober = ReplicateProber(grids, stays, split, cfg)
    clock["preprocess"] = time.perf_counter() - t0

    cells: list[Cell] = []
    logs, ckpts = {}, {}
    for kind in cfg.models:
        t0 = time.perf_counter()
        ckpts[kind], logs[kind] = fit_representation(kind, grids, split, cfg)
        dumps = represent_roles(ckpts[kind], grids, split, cfg.T)
        clock[f"train:{kind}"] = time.perf_counter() - t0
        log.info("replicate %d: %s trained in %.1fs (%d epochs)", r, kind,
                 clock[f"train:{kind}"], logs[kind].stop_epoch)
        cells += prober.representation_cells(kind, dumps, clock)
    cells += prober.raw_cells(clock)
    return ReplicateResult(r, cells, prober.selections, logs, ckpts, clock, prober.test2_scores)


def _run_one(args):
    return run_replicate(*args)


def run_experiment(records, table, splits: list[SplitSpec], cfg: ExperimentConfig,
                   jobs: int = 1) -> list[ReplicateResult]:
    """All replicates, in parallel processes when ``jobs > 1``; results in replicate order."""
    work = [(records, table, s, cfg) for s in splits]
    if jobs <= 1 or len(work) == 1:
        return [run_replicate(*w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, work))


def best_representation(selections: list[Selection], task: str, models,
                        fractions=(1.0,)) -> str | None:
    """Representation with the highest mean test1 AUPRC over ``fractions``.

    Approaches missing a selection at any of the fractions are skipped; ties go to
    the one listed first in ``models``.
    """
    fractions = tuple(fractions)
    by_kind: dict[str, dict[float, float]] = {}
    for s in selections:
        if s.task == task and s.metric == "auprc" and s.approach in models:
            by_kind.setdefault(s.approach, {})[s.fraction] = s.value
    scored = [(float(np.mean([v[f] for f in fractions])), -list(models).index(k), k)
              for k, v in by_kind.items() if all(f in v for f in fractions)]
    return max(scored)[2] if scored else None


def dimension_sweep(records, table, splits, dims, task: str, cfg: ExperimentConfig,
                    jobs: int = 1) -> list[Cell]:
    """AUROC/AUPRC of S2S-F-A representations at each size in ``dims``."""
    out = []
    for m in dims:
        sub = replace(cfg, models=("s2s_f_a",), m=int(m), directions=(), tasks=(task,),
                      fractions=(1.0,), raw_layers=(), curve_models=None)
        for res in run_experiment(records, table, splits, sub, jobs):
            out += [replace(c, approach=f"s2s_f_a@m={m}") for c in res.cells]
    return out
