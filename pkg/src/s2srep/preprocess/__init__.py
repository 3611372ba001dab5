"""Raw irregular observations to scaled hourly windows and patient splits."""

from __future__ import annotations

from .cohort import filter_cohort, make_splits, read_splits, write_splits
from .impute import filter_record, impute_grid, reject_outliers
from .records import (
    HORIZONS, OUTCOMES, PROVENANCE, GridMatrix, InputError, PatientRecord, SplitSpec,
    VariableSpec, read_grid, read_raw, read_specs, read_variable_table, write_grid,
    write_raw, write_specs,
)
from .stats import compute_percentiles, fit_variable_specs, select_variables
from .windows import Window, scale, unscale, window_array, windows


def build_grids(records: list[PatientRecord], specs: list[VariableSpec]) -> dict[str, GridMatrix]:
    """Unscaled imputed grids keyed by patient id."""
    return {r.patient_id: impute_grid(r, specs) for r in records}


def prepare_replicate(records: list[PatientRecord], table: dict[str, str], split: SplitSpec):
    """Specs fitted on the split's train patients and scaled grids for everyone."""
    train_ids = set(split.train)
    specs = fit_variable_specs([r for r in records if r.patient_id in train_ids], table)
    grids = {pid: scale(g, specs) for pid, g in build_grids(records, specs).items()}
    return specs, grids


__all__ = [
    "HORIZONS", "OUTCOMES", "PROVENANCE", "GridMatrix", "InputError", "PatientRecord",
    "SplitSpec", "VariableSpec", "Window", "build_grids", "compute_percentiles",
    "filter_cohort", "filter_record", "fit_variable_specs", "impute_grid", "make_splits",
    "prepare_replicate", "read_grid", "read_raw", "read_specs", "read_splits",
    "read_variable_table", "reject_outliers", "scale", "select_variables", "unscale",
    "window_array", "windows", "write_grid", "write_raw", "write_specs", "write_splits",
]
