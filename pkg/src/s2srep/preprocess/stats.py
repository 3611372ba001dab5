"""Train-set statistics: percentiles, medians and scaling moments."""

from __future__ import annotations

import logging

import numpy as np

from .impute import filter_record, impute_grid
from .records import PatientRecord, VariableSpec

log = logging.getLogger(__name__)


def _pooled(records: list[PatientRecord], variable: str) -> np.ndarray:
    parts = [r.observations[variable][1] for r in records if variable in r.observations]
    return np.concatenate(parts) if parts else np.empty(0)


def compute_percentiles(records: list[PatientRecord], variable: str):
    """Linear-interpolation 5th/95th percentiles and median over all observations.

    Returns ``None`` when the variable has no observations.
    """
    vals = _pooled(records, variable)
    if vals.size == 0:
        return None
    p5, med, p95 = np.percentile(vals, [5.0, 50.0, 95.0])
    return float(p5), float(p95), float(med)


def select_variables(records: list[PatientRecord], table: dict[str, str],
                     min_fraction: float = 0.1) -> dict[str, str]:
    """Keep variables recorded at least once for ``min_fraction`` of patients."""
    n = max(len(records), 1)
    kept = {}
    for vid, cls in table.items():
        frac = sum(1 for r in records if len(r.observations.get(vid, ((),))[0]) > 0) / n
        if frac >= min_fraction:
            kept[vid] = cls
        else:
            log.warning("dropping variable %s: recorded for %.1f%% of patients", vid, 100 * frac)
    return kept


def fit_variable_specs(train: list[PatientRecord], table: dict[str, str]) -> list[VariableSpec]:
    """Percentiles, filtered medians and grid moments, all from ``train`` only."""
    specs = []
    for vid, cls in table.items():
        pct = compute_percentiles(train, vid)
        if pct is None:
            log.warning("dropping variable %s: no observations in the training set", vid)
            continue
        p5, p95, _ = pct
        specs.append(VariableSpec(vid, cls, p5, p95, float("nan")))
    filtered = [filter_record(r, specs) for r in train]
    for s in specs:
        vals = _pooled(filtered, s.variable_id)
        s.median = float(np.median(vals)) if vals.size else 0.5 * (s.p5 + s.p95)
    if train:
        stacked = np.concatenate([impute_grid(r, specs, filtered=True).values for r in filtered])
        mean = stacked.mean(axis=0)
        std = stacked.std(axis=0)
        for j, s in enumerate(specs):
            s.mean = float(mean[j])
            s.constant = bool(std[j] <= 1e-12 * max(1.0, abs(mean[j])))
            s.std = 1.0 if s.constant else float(std[j])
            if s.constant:
                log.warning("variable %s is constant on the training grid", s.variable_id)
    return specs
