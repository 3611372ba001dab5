import dataclasses
import math
import types

import numpy as np
import pytest

from s2srep.eval import label_windows
from s2srep.preprocess import read_raw, write_raw
from s2srep.synthdata import GeneratorConfig, generate, readout_matrix, variable_table

SMALL = GeneratorConfig(n_patients=30, n_vars=6, seed=3)


def prevalence(records, task):
    grids = {r.patient_id: types.SimpleNamespace(L=math.ceil(r.stay_hours)) for r in records}
    stays = {r.patient_id: (r.stay_hours, r.outcome) for r in records}
    return label_windows(grids, stays, task).prevalence


def test_same_seed_same_cohort(tmp_path):
    a, b = generate(SMALL)[0], generate(SMALL)[0]
    write_raw(tmp_path / "a", a, variable_table(SMALL))
    write_raw(tmp_path / "b", b, variable_table(SMALL))
    for name in ("patients.csv", "observations.csv", "variables.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_other_seed_differs():
    a = generate(SMALL)[0]
    b = generate(dataclasses.replace(SMALL, seed=4))[0]
    assert [r.stay_hours for r in a] != [r.stay_hours for r in b]


def test_patient_streams_do_not_depend_on_cohort_size():
    few = generate(dataclasses.replace(SMALL, n_patients=5))[0]
    many = generate(SMALL)[0]
    for r, s in zip(few, many):
        assert r.stay_hours == s.stay_hours and r.outcome == s.outcome


def test_noiseless_channels_are_linear_readouts():
    cfg = dataclasses.replace(SMALL, noise_scale=0.0, missingness_rate=0.0, absent_fraction=0.0)
    records, latents, _ = generate(cfg)
    offset, scale, loadings = readout_matrix(cfg)
    for rec in records[:5]:
        lat = latents[rec.patient_id]
        for name, (times, values) in rec.observations.items():
            hours = np.clip(np.ceil(times), 1, rec.stay_hours).astype(int)
            design = np.c_[np.ones(len(hours)), lat[hours]]
            coef, *_ = np.linalg.lstsq(design, values, rcond=None)
            resid = values - design @ coef
            assert np.abs(resid).max() < 1e-8 * np.abs(values).max()
            col = list(variable_table(cfg)).index(name)
            expected = offset[col] + scale[col] * (lat[hours] @ loadings[col])
            np.testing.assert_allclose(values, expected, rtol=1e-12)


def test_records_round_trip_through_the_raw_reader(tmp_path):
    records, _, table = generate(SMALL)
    write_raw(tmp_path, records, table)
    back, table2 = read_raw(tmp_path)
    assert table2 == table and len(back) == len(records)
    for r in back:
        assert 72 <= r.stay_hours <= 240
        for times, _ in r.observations.values():
            assert times.min() >= 0 and times.max() <= r.stay_hours


def test_default_prevalence_near_targets():
    records = generate(GeneratorConfig())[0]
    for task, target in (("discharge", 0.197), ("mortality", 0.021)):
        assert abs(prevalence(records, task) / target - 1) <= 0.5, task


def test_null_hazards_still_end_stays():
    cfg = dataclasses.replace(SMALL, death_coef=0.0, discharge_coef=0.0, n_patients=60)
    records = generate(cfg)[0]
    assert {r.outcome for r in records} <= {"died", "discharged_stable"}
    assert all(72 <= r.stay_hours <= 240 for r in records)


@pytest.mark.parametrize("change", [
    {"n_patients": 0}, {"n_vars": 95}, {"stay_range": (48.0, 240.0)},
    {"stay_range": (100.0, 300.0)}, {"death_rate": 0.0}, {"slow_ar": 1.0},
    {"missingness_rate": 1.0}, {"noise_scale": -1.0},
    {"intervals": {"periodic": 1.0, "aperiodic": 2.0}},
])
def test_invalid_configs_rejected(change):
    with pytest.raises(ValueError):
        generate(dataclasses.replace(SMALL, **change))
