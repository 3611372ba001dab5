"""Turn grids and representation dumps into probe inputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..preprocess.windows import window_array
from .labels import LabeledWindowSet
from .probes import ScoredSequence


@dataclass
class RepresentationDump:
    """``e_t`` for every window end ``t = T..L`` of one patient."""
    patient_id: str
    end_times: np.ndarray   # (n,)
    vectors: np.ndarray     # (n, m)


def represent(model, params, grid, T: int, chunk: int = 8192) -> RepresentationDump:
    L, d = grid.values.shape
    if d != getattr(model, "d", d):
        raise ValueError(f"{grid.patient_id}: grid has {d} channels, model expects {model.d}")
    w = window_array(grid.values, T)
    if len(w) == 0:
        return RepresentationDump(grid.patient_id, np.zeros(0, np.int64), np.zeros((0, model.m)))
    vecs = np.concatenate([np.asarray(model.encode(params, w[i:i + chunk]))
                           for i in range(0, len(w), chunk)])
    return RepresentationDump(grid.patient_id, np.arange(T, L + 1), vecs)


def signal_windows(dumps: dict[str, RepresentationDump], grids, direction: str, T: int,
                   steps: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Stack ``(e_t, target)`` pairs for the past or future ``steps`` hours.

    Future targets need ``t + steps <= L``; windows without them are dropped.
    """
    reps, targets = [], []
    for pid, dump in dumps.items():
        vals = grids[pid].values
        L = vals.shape[0]
        t = dump.end_times
        if direction == "future":
            keep = t + steps <= L
            tg = [vals[e:e + steps] for e in t[keep]]
        elif direction == "past":
            keep = t >= steps
            tg = [vals[e - steps:e] for e in t[keep]]
        else:
            raise ValueError(f"direction must be 'past' or 'future', got {direction!r}")
        if keep.any():
            reps.append(dump.vectors[keep])
            targets.append(np.stack(tg))
    if not reps:
        raise ValueError(f"no windows with a full {direction} horizon")
    return np.concatenate(reps), np.concatenate(targets)


def representation_sequences(dumps: dict[str, RepresentationDump],
                             labels: LabeledWindowSet) -> list[ScoredSequence]:
    """Per patient, the sequence ``e_12..e_L`` scored at every step."""
    out = []
    for p in labels.patients:
        dump = dumps[p.patient_id]
        row = {int(t): i for i, t in enumerate(dump.end_times)}
        pos = np.array([row[int(t)] for t in p.end_times], dtype=np.int64)
        if len(pos) == 0:
            continue
        first = pos.min()
        out.append(ScoredSequence(p.patient_id, dump.vectors[first:], pos - first, p.labels,
                                  p.end_times))
    return out


def raw_sequences(grids, labels: LabeledWindowSet) -> list[ScoredSequence]:
    """Per patient, the hourly grid ``x_1..x_L`` scored at the rows of labelled hours."""
    out = []
    for p in labels.patients:
        if len(p.end_times) == 0:
            continue
        out.append(ScoredSequence(p.patient_id, grids[p.patient_id].values,
                                  p.end_times.astype(np.int64) - 1, p.labels,
                                  p.end_times))
    return out
