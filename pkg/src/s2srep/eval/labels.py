"""Window-level outcome labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..preprocess.records import OUTCOMES

TASKS = {"discharge": "discharged_stable", "mortality": "died"}
MIN_END = 12


@dataclass
class PatientLabels:
    patient_id: str
    end_times: np.ndarray   # window end hours, all >= MIN_END
    labels: np.ndarray      # int8, aligned with end_times


@dataclass
class LabeledWindowSet:
    task: str
    horizon: float
    patients: list[PatientLabels]

    @property
    def n_windows(self) -> int:
        return sum(len(p.labels) for p in self.patients)

    @property
    def prevalence(self) -> float:
        n = self.n_windows
        return float(sum(int(p.labels.sum()) for p in self.patients) / n) if n else float("nan")

    def by_patient(self) -> dict[str, PatientLabels]:
        return {p.patient_id: p for p in self.patients}


def window_label(end_time: float, stay_hours: float, outcome: str, task: str,
                 horizon: float = 24.0) -> int:
    """1 iff the stay ends in ``(end_time, end_time + horizon]`` with the task's outcome."""
    if outcome not in OUTCOMES:
        raise ValueError(f"unknown outcome code {outcome!r}")
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {sorted(TASKS)}")
    return int(outcome == TASKS[task] and end_time < stay_hours <= end_time + horizon)


def label_windows(grids, stays: dict[str, tuple[float, str]], task: str,
                  horizon: float = 24.0, min_end: int = MIN_END) -> LabeledWindowSet:
    """Label every hourly window end ``t = min_end..L`` of each grid.

    ``stays`` maps patient id to ``(stay_hours, outcome)``.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {sorted(TASKS)}")
    out = []
    for pid, grid in grids.items():
        stay, outcome = stays[pid]
        if outcome not in OUTCOMES:
            raise ValueError(f"{pid}: unknown outcome code {outcome!r}")
        t = np.arange(min_end, grid.L + 1, dtype=np.float64)
        y = (outcome == TASKS[task]) & (t < stay) & (stay <= t + horizon)
        out.append(PatientLabels(pid, t.astype(np.int64), y.astype(np.int8)))
    return LabeledWindowSet(task, horizon, out)
