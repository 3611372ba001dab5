"""Outlier rejection and hourly gridding with three-tier imputation."""

from __future__ import annotations

import numpy as np

from .. import kernels
from .records import GridMatrix, PatientRecord, VariableSpec


def reject_outliers(times: np.ndarray, values: np.ndarray, spec: VariableSpec):
    """Drop observations strictly outside ``[p5, p95]``; boundary values stay."""
    keep = (values >= spec.p5) & (values <= spec.p95)
    return times[keep], values[keep]


def filter_record(record: PatientRecord, specs: list[VariableSpec]) -> PatientRecord:
    by_id = {s.variable_id: s for s in specs}
    obs = {vid: reject_outliers(t, v, by_id[vid])
           for vid, (t, v) in record.observations.items() if vid in by_id}
    return PatientRecord(record.patient_id, record.stay_hours, record.outcome,
                         record.stay_count, obs)


def impute_grid(record: PatientRecord, specs: list[VariableSpec],
                filtered: bool = False) -> GridMatrix:
    """Hourly grid for one patient, one column per spec.

    Row ``t`` (1-based) covers ``(t-1, t]`` hours after admission. Each cell
    takes the latest visible observation if it is at most the variable's
    horizon old, else the mean of all earlier observations, else the
    population median. Outliers are rejected first unless ``filtered``.
    """
    known = {s.variable_id for s in specs}
    unknown = set(record.observations) - known
    if unknown:
        raise KeyError(f"patient {record.patient_id}: unknown variable ids {sorted(unknown)}")
    if not filtered:
        record = filter_record(record, specs)
    L = record.n_rows
    values = np.empty((L, len(specs)))
    mask = np.empty((L, len(specs)), dtype=np.int8)
    empty = np.empty(0)
    for j, spec in enumerate(specs):
        t, v = record.observations.get(spec.variable_id, (empty, empty))
        values[:, j], mask[:, j] = kernels.impute_column(t, v, L, spec.horizon, spec.median)
    return GridMatrix(record.patient_id, values, mask, tuple(s.variable_id for s in specs))
