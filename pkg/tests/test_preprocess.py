import shutil
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from s2srep.preprocess import (
    PROVENANCE, GridMatrix, InputError, PatientRecord, VariableSpec, compute_percentiles,
    filter_cohort, fit_variable_specs, impute_grid, make_splits, read_grid, read_raw,
    read_specs, read_splits, reject_outliers, scale, select_variables, unscale, window_array,
    windows, write_grid, write_raw, write_specs, write_splits,
)

GOLDEN = Path(__file__).parent / "golden"


def record(pid="p", stay=10.0, obs=None, outcome="discharged_stable", count=1):
    obs = {k: (np.asarray(t, float), np.asarray(v, float)) for k, (t, v) in (obs or {}).items()}
    return PatientRecord(pid, stay, outcome, count, obs)


def spec(vid="v", cls="periodic", p5=-1e9, p95=1e9, median=0.0, mean=0.0, std=1.0):
    return VariableSpec(vid, cls, p5, p95, median, mean, std)


class TestPercentiles:
    def test_one_to_hundred(self):
        r = record(obs={"v": (np.linspace(0, 9, 100), np.arange(1.0, 101.0))})
        p5, p95, med = compute_percentiles([r], "v")
        assert abs(p5 - 5.95) < 1e-12 and abs(p95 - 95.05) < 1e-12 and med == 50.5

    def test_constant_and_single(self):
        assert compute_percentiles([record(obs={"v": ([1, 2, 3], [7.0] * 3)})], "v") == (7.0,) * 3
        assert compute_percentiles([record(obs={"v": ([1], [2.5])})], "v") == (2.5,) * 3

    def test_missing_variable(self):
        assert compute_percentiles([record()], "v") is None

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
    def test_matches_linear_rule_and_orders(self, vals):
        r = record(obs={"v": (np.zeros(len(vals)), vals)})
        p5, p95, med = compute_percentiles([r], "v")
        assert p5 <= med <= p95
        assert abs(p5 - oracles.percentile_linear(vals, 5)) <= 1e-9 * max(1, abs(p5))
        assert abs(p95 - oracles.percentile_linear(vals, 95)) <= 1e-9 * max(1, abs(p95))

    def test_pooled_across_patients(self):
        a = record("a", obs={"v": ([1.0], [1.0])})
        b = record("b", obs={"v": ([1.0, 2.0], [3.0, 5.0])})
        assert compute_percentiles([a, b], "v")[2] == 3.0


class TestOutliers:
    s = spec(p5=2.0, p95=100.0)

    def test_band_example(self):
        t, v = reject_outliers(np.arange(3.0), np.array([1.0, 50.0, 999.0]), self.s)
        assert v.tolist() == [50.0] and t.tolist() == [1.0]

    def test_boundaries_kept(self):
        _, v = reject_outliers(np.arange(2.0), np.array([2.0, 100.0]), self.s)
        assert v.tolist() == [2.0, 100.0]

    @given(st.lists(st.floats(-500, 500), max_size=30))
    def test_idempotent(self, vals):
        t, v = np.arange(float(len(vals))), np.array(vals, dtype=float)
        once = reject_outliers(t, v, self.s)
        twice = reject_outliers(*once, self.s)
        assert once[1].tolist() == twice[1].tolist() and once[0].tolist() == twice[0].tolist()
        assert ((once[1] >= 2.0) & (once[1] <= 100.0)).all()


class TestImpute:
    def test_lab_forward_fill(self):
        g = impute_grid(record(stay=12.0, obs={"v": ([1.5], [3.0])}), [spec(cls="lab")])
        assert g.values[11, 0] == 3.0 and PROVENANCE[g.mask[11, 0]] == "forward-filled"

    def test_periodic_history_mean(self):
        g = impute_grid(record(stay=6.0, obs={"v": ([0.5, 2.0], [4.0, 6.0])}),
                        [spec(cls="periodic")])
        assert g.values[4, 0] == 5.0 and PROVENANCE[g.mask[4, 0]] == "history-mean"

    def test_never_observed(self):
        g = impute_grid(record(stay=5.0), [spec(median=42.0)])
        assert (g.values == 42.0).all() and (g.mask == PROVENANCE.index("population-median")).all()

    def test_horizon_boundary_inclusive(self):
        g = impute_grid(record(stay=3.0, obs={"v": ([1.0], [9.0])}), [spec(cls="periodic")])
        assert [PROVENANCE[c] for c in g.mask[:, 0]] == [
            "observed", "forward-filled", "history-mean"]

    def test_outliers_removed_before_gridding(self):
        g = impute_grid(record(stay=2.0, obs={"v": ([0.5, 1.5], [500.0, 7.0])}),
                        [spec(p5=0.0, p95=100.0, median=1.0)])
        assert g.values[:, 0].tolist() == [1.0, 7.0]

    def test_unknown_variable(self):
        with pytest.raises(KeyError):
            impute_grid(record(obs={"zz": ([1.0], [1.0])}), [spec()])

    @pytest.mark.parametrize("cls", ["periodic", "aperiodic", "lab"])
    def test_matches_oracle(self, cls):
        rng = np.random.default_rng(len(cls))
        t = np.sort(rng.uniform(0, 40, 25))
        v = rng.normal(size=25)
        s = spec(cls=cls, p5=-1.5, p95=1.5, median=0.25)
        g = impute_grid(record(stay=40.0, obs={"v": (t, v)}), [s])
        kept = [(a, b) for a, b in zip(t, v) if -1.5 <= b <= 1.5]
        for row in range(1, 41):
            val, tier = oracles.impute_cell(kept, row, s.horizon, 0.25)
            assert g.values[row - 1, 0] == pytest.approx(val, abs=1e-12)
            assert PROVENANCE[g.mask[row - 1, 0]] == tier

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 30))
    def test_causal(self, seed, cut):
        rng = np.random.default_rng(seed)
        specs = [spec("a", "periodic"), spec("b", "aperiodic"), spec("c", "lab", median=3.0)]
        obs = {k: (np.sort(rng.uniform(0, 30, 12)), rng.normal(size=12)) for k in "abc"}
        full = impute_grid(record(stay=30.0, obs=obs), specs)
        trunc = {k: (t[t <= cut], v[t <= cut]) for k, (t, v) in obs.items()}
        part = impute_grid(record(stay=float(cut), obs=trunc), specs)
        np.testing.assert_array_equal(part.values, full.values[:cut])
        np.testing.assert_array_equal(part.mask, full.mask[:cut])

    def test_no_missing_cells(self):
        rng = np.random.default_rng(0)
        specs = [spec("a", "lab", median=1.0), spec("b", "aperiodic", median=2.0)]
        g = impute_grid(record(stay=50.0, obs={"a": (np.sort(rng.uniform(0, 50, 4)),
                                                     rng.normal(size=4))}), specs)
        assert np.isfinite(g.values).all() and set(np.unique(g.mask)) <= {0, 1, 2, 3}


class TestGolden:
    patients = [f"p{i:02d}" for i in range(1, 11)]

    def test_byte_identical(self, tmp_path):
        records, _ = read_raw(GOLDEN / "raw")
        specs = read_specs(GOLDEN / "specs.tsv")
        assert sorted(r.patient_id for r in records) == self.patients
        for r in records:
            gpath, mpath = write_grid(tmp_path, impute_grid(r, specs))
            assert gpath.read_bytes() == (GOLDEN / "expected" / gpath.name).read_bytes(), gpath.name
            assert mpath.read_bytes() == (GOLDEN / "expected" / mpath.name).read_bytes(), mpath.name

    def test_covers_every_tier_and_class(self):
        specs = read_specs(GOLDEN / "specs.tsv")
        assert {s.var_class for s in specs} == {"periodic", "aperiodic", "lab"}
        seen = {s.var_class: set() for s in specs}
        for pid in self.patients:
            g = read_grid(GOLDEN / "expected" / f"{pid}.grid.tsv")
            for j, s in enumerate(specs):
                seen[s.var_class] |= set(g.mask[:, j].tolist())
        assert set().union(*seen.values()) == {0, 1, 2, 3}
        for cls, codes in seen.items():
            assert {0, 1, 2} <= codes, cls

    def test_generator_is_reproducible(self, tmp_path):
        import importlib.util
        spec_ = importlib.util.spec_from_file_location("make_golden", GOLDEN / "make_golden.py")
        mod = importlib.util.module_from_spec(spec_)
        spec_.loader.exec_module(mod)
        mod.write(tmp_path)
        for p in (GOLDEN / "expected").iterdir():
            assert (tmp_path / "expected" / p.name).read_bytes() == p.read_bytes()


class TestCohort:
    def test_stay_bounds(self):
        rs = [record("a", 71.0), record("b", 72.0), record("c", 240.0), record("d", 240.5)]
        assert [r.patient_id for r in filter_cohort(rs)] == ["b", "c"]

    def test_multi_stay_excluded(self):
        assert filter_cohort([record("a", 100.0, count=2)]) == []


class TestScale:
    def test_identity_and_arithmetic(self):
        g = GridMatrix("p", np.array([[10.0, 5.0]]), np.zeros((1, 2), np.int8), ("a", "b"))
        out = scale(g, [spec("a", mean=4.0, std=2.0), spec("b", mean=0.0, std=1.0)])
        assert out.values.tolist() == [[3.0, 5.0]]

    def test_constant_column_centred(self):
        s = spec(mean=7.0, std=1.0)
        s.constant = True
        g = GridMatrix("p", np.full((3, 1), 7.0), np.zeros((3, 1), np.int8), ("v",))
        assert not scale(g, [s]).values.any()

    @given(st.integers(0, 2**32 - 1))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        specs = [spec(str(j), mean=rng.normal() * 50, std=rng.uniform(0.1, 20)) for j in range(3)]
        g = GridMatrix("p", rng.normal(size=(5, 3)) * 30, np.zeros((5, 3), np.int8), ("0", "1", "2"))
        np.testing.assert_allclose(unscale(scale(g, specs), specs).values, g.values, atol=1e-10)

    def test_specs_use_train_patients_only(self):
        train = [record("a", 4.0, {"v": ([0.5, 1.5, 2.5, 3.5], [1.0, 2.0, 3.0, 4.0])})]
        other = record("b", 4.0, {"v": ([0.5], [1000.0])})
        (s,) = fit_variable_specs(train, {"v": "periodic"})
        assert s.p95 < 5.0
        assert fit_variable_specs(train, {"v": "periodic"})[0].mean == s.mean
        assert impute_grid(other, [s]).values[0, 0] == s.median


class TestWindows:
    def grid(self, L, d=2):
        vals = np.arange(L * d, dtype=float).reshape(L, d)
        return GridMatrix("p", vals, np.zeros((L, d), np.int8), tuple("ab"[:d]))

    def test_counts_and_end_times(self):
        assert len(windows(self.grid(12), 12)) == 1
        ws = windows(self.grid(14), 12)
        assert [w.end_time for w in ws] == [12, 13, 14]
        assert window_array(self.grid(5).values, 12).shape == (0, 12, 2)

    def test_overlap(self):
        ws = windows(self.grid(20), 6)
        for a, b in zip(ws, ws[1:]):
            np.testing.assert_array_equal(a.values[1:], b.values[:-1])
        assert all(w.end_time >= 6 for w in ws)
        np.testing.assert_array_equal(ws[-1].values, self.grid(20).values[-6:])


class TestSplits:
    def test_sizes(self):
        for s in make_splits([f"p{i}" for i in range(100)], seed=0):
            assert [len(s.role(r)) for r in s.ROLES] == [40, 40, 10, 10]

    def test_deterministic_and_distinct_replicates(self):
        ids = [f"p{i}" for i in range(50)]
        a, b = make_splits(ids, seed=3), make_splits(ids, seed=3)
        assert a == b
        assert a[0].train != a[1].train

    @given(st.integers(10, 300), st.integers(0, 1000))
    def test_partition(self, n, seed):
        ids = [f"id{i}" for i in range(n)]
        for s in make_splits(ids, seed=seed, replicates=2):
            sets = [set(s.role(r)) for r in s.ROLES]
            assert set().union(*sets) == set(ids)
            assert sum(len(x) for x in sets) == n
            for ratio, x in zip((0.4, 0.4, 0.1, 0.1), sets):
                assert abs(len(x) - ratio * n) <= 1

    def test_too_few(self):
        with pytest.raises(ValueError):
            make_splits(["a"] * 5, seed=0)

    def test_round_trip(self, tmp_path):
        splits = make_splits([f"p{i}" for i in range(20)], seed=1)
        write_splits(tmp_path / "s.json", splits)
        assert read_splits(tmp_path / "s.json") == splits


class TestFiles:
    def test_raw_round_trip(self, tmp_path):
        records, table = read_raw(GOLDEN / "raw")
        write_raw(tmp_path, records, table)
        again, table2 = read_raw(tmp_path)
        assert table2 == table
        for a, b in zip(records, again):
            assert (a.patient_id, a.stay_hours, a.outcome) == (b.patient_id, b.stay_hours, b.outcome)
            for k in a.observations:
                np.testing.assert_array_equal(a.observations[k][1], b.observations[k][1])

    @pytest.mark.parametrize("line,needle", [
        ("p01,hr,99.0,1.0", "outside stay"),
        ("p01,zz,1.0,1.0", "unknown variable"),
        ("nobody,hr,1.0,1.0", "unknown patient"),
        ("p01,hr,abc,1.0", "non-numeric"),
    ])
    def test_bad_observation_lines_name_the_line(self, tmp_path, line, needle):
        shutil.copytree(GOLDEN / "raw", tmp_path / "raw")
        path = tmp_path / "raw" / "observations.csv"
        n_lines = len(path.read_text().splitlines())
        with open(path, "a") as fh:
            fh.write(line + "\n")
        with pytest.raises(InputError, match=rf"observations.csv:{n_lines + 1}: .*{needle}"):
            read_raw(tmp_path / "raw")

    def test_bad_outcome(self, tmp_path):
        shutil.copytree(GOLDEN / "raw", tmp_path / "raw")
        with open(tmp_path / "raw" / "patients.csv", "a") as fh:
            fh.write("p99,80.0,transferred,1\n")
        with pytest.raises(InputError, match="unknown outcome"):
            read_raw(tmp_path / "raw")

    def test_specs_round_trip(self, tmp_path):
        specs = read_specs(GOLDEN / "specs.tsv")
        write_specs(tmp_path / "s.tsv", specs)
        assert read_specs(tmp_path / "s.tsv") == specs

    def test_select_variables(self):
        rs = [record(str(i), obs={"v": ([1.0], [1.0])} if i == 0 else {}) for i in range(20)]
        assert select_variables(rs, {"v": "lab"}, min_fraction=0.1) == {}
        assert select_variables(rs, {"v": "lab"}, min_fraction=0.05) == {"v": "lab"}
