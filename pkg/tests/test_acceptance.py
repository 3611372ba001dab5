"""Acceptance criteria, one test per criterion.

Each test prints a ``PASS``/``FAIL`` line (also collected in the terminal
summary). Tolerances are the ones the criteria state. Criteria 10-12 run the
synthetic 400-patient, 5-replicate experiments and take most of the time.
"""

import dataclasses
import math
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from s2srep import numerics as nx
from s2srep.eval import (
    Cell, ExperimentConfig, ProbeConfig, SplitAuditError, audit_report, audit_splits, auprc,
    auroc, best_representation, label_windows, run_replicate,
)
from s2srep.models import attention_scores, build_model, corpus_loss, lstm_step, pca_fit
from s2srep.numerics import Tape
from s2srep.preprocess import (
    filter_cohort, impute_grid, make_splits, prepare_replicate, read_grid, read_raw, read_specs,
    write_grid,
)
from s2srep.preprocess.records import SplitSpec
from s2srep.synthdata import GeneratorConfig, generate
from s2srep.train import EarlyStopper, TrainConfig, early_stop, make_training_windows, train

GOLDEN = Path(__file__).parent / "golden"
REPLICATES = range(5)
LOW_FRACTIONS = (0.01, 0.02, 0.05)
REPRESENTATIONS = ("pca", "s2s_f", "s2s_f_a")


# -- 1-8: oracles and contracts ------------------------------------------------

def _gradient_instance(kind, seed):
    rng = np.random.default_rng([1, seed])
    model = build_model(kind, d=3, m=4, T=5)
    P = model.init_params(seed)
    x, y = rng.normal(size=(2, 5, 3)), rng.normal(size=(2, 5, 3))
    return model, P, x, y, np.array([0.4, 0.6])


def _extended(arrays):
    return {k: v.astype(np.longdouble) for k, v in arrays.items()}


def test_01_gradients(verdict, note):
    # Central differences with step 1e-5 evaluated in extended precision: in
    # float64 the rounding of the loss alone is ~1e-10 per difference, which is
    # 1e-4 relative on the smallest gradient entries.
    t0 = time.perf_counter()
    worst, mismatch = {}, 0.0
    for kind in ("ae", "s2s_ae", "s2s_f", "s2s_f_a"):
        worst[kind] = 0.0
        for seed in range(20):
            model, P, x, y, w = _gradient_instance(kind, seed)
            with Tape() as tape:
                leaves = tape.watch(P)
                loss = model.loss(leaves, x, y, w)
            analytic = tape.backward(loss, leaves)
            mismatch = max(mismatch, abs(loss.item() - oracles.reference_loss(kind, P, x, y, w)))
            L = np.longdouble
            numeric = oracles.batched_central_differences(
                kind, _extended(P), x.astype(L), y.astype(L), w.astype(L), L(1e-5))
            numeric = {k: v.astype(np.float64) for k, v in numeric.items()}
            worst[kind] = max(worst[kind], nx.max_relative_error(analytic, numeric))
    seconds = time.perf_counter() - t0
    double = 0.0
    for kind in ("ae", "s2s_ae", "s2s_f", "s2s_f_a"):
        for seed in range(20):
            model, P, x, y, w = _gradient_instance(kind, seed)
            with Tape() as tape:
                leaves = tape.watch(P)
                analytic = tape.backward(model.loss(leaves, x, y, w), leaves)
            numeric = oracles.batched_central_differences(kind, P, x, y, w, 1e-5)
            double = max(double, nx.max_relative_error(analytic, numeric))
    note(1, f"same check with float64 differences: max rel err {double:.1e}")
    ok = max(worst.values()) < 1e-4 and seconds < 30 and mismatch < 1e-12
    verdict(1, ok, "max rel err " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
            + f" (< 1e-4); reference loss gap {mismatch:.0e}; {seconds:.1f}s (< 30s)")


def test_02_pca_oracle(verdict):
    x = np.random.default_rng(2).normal(size=(50, 8)) @ np.diag([3, 2.5, 2, 1.5, 1, .5, .3, .1])
    m = 3
    model = pca_fit(x, m)
    centred = x - x.mean(axis=0)
    lam = np.sort(np.linalg.eig(centred.T @ centred / len(x))[0].real)[::-1]
    mse = float(((model.decode(model.encode(x)) - x) ** 2).mean())
    expected = lam[m:].sum() / x.shape[1]
    verdict(2, abs(mse - expected) < 1e-8,
            f"reconstruction MSE {mse:.12f} vs discarded-eigenvalue mean per coordinate "
            f"{expected:.12f} (|diff| {abs(mse - expected):.1e} < 1e-8)")


def test_03_lstm_oracle(verdict, note):
    # gate pre-activations of exactly 1: i = f = o = sigmoid(1), g = tanh(1)
    P = {"enc.Wx": np.ones((1, 4)), "enc.Wh": np.ones((1, 4)), "enc.b": np.zeros(4)}
    h, c = lstm_step(np.array([1.0]), np.zeros(1), np.zeros(1), P)
    h, c = float(h.data[0]), float(c.data[0])
    P["enc.b"] = np.ones(4)
    h2, c2 = (float(v.data[0]) for v in lstm_step(np.array([1.0]), np.zeros(1), np.zeros(1), P))
    s1 = 1 / (1 + math.exp(-1.0))
    note(3, f"sigmoid(1)*tanh(sigmoid(1)*tanh(1)) = {s1 * math.tanh(s1 * math.tanh(1.0)):.6f}, "
            f"so the reference h' 0.36936 is 2.5e-4 off its own gate recipe while c' matches; "
            f"with unit biases the pre-activations are 2 (h'={h2:.5f}, c'={c2:.5f})")
    verdict(3, abs(h - 0.36936) < 1e-5 and abs(c - 0.55677) < 1e-5,
            f"h'={h:.6f} (0.36936), c'={c:.6f} (0.55677), tol 1e-5")


def test_04_attention(verdict):
    rng = np.random.default_rng(4)
    worst_sum = worst_uniform = 0.0
    for _ in range(100):
        T, m, B = int(rng.integers(1, 13)), int(rng.integers(1, 9)), int(rng.integers(1, 4))
        enc = rng.normal(size=(T, B, m))
        h = rng.normal(size=(B, m))
        We, Wd = rng.normal(size=(m, m)), rng.normal(size=(m, m))
        beta = rng.normal(size=m) * 3
        _, alpha = nx.additive_attention(h, enc, enc @ We, Wd, beta)
        worst_sum = max(worst_sum, float(np.abs(alpha.sum(axis=0) - 1).max()))
        a = {"att.beta": beta, "att.Wd": Wd, "att.We": We}
        worst_sum = max(worst_sum, abs(attention_scores(h[0], enc[:, 0], a).sum() - 1))
        _, flat = nx.additive_attention(h, enc, enc @ We, Wd, np.zeros(m))
        worst_uniform = max(worst_uniform, float(np.abs(flat - 1.0 / T).max()))
    _, single = nx.additive_attention(np.ones((1, 2)), np.ones((1, 1, 2)), np.ones((1, 1, 2)),
                                      np.ones((2, 2)), np.ones(2))
    ok = worst_sum <= 1e-12 and worst_uniform <= 1e-12 and single.ravel().tolist() == [1.0]
    verdict(4, ok, f"|sum(alpha)-1| <= {worst_sum:.1e}, beta=0 max |alpha-1/T| "
            f"{worst_uniform:.1e} (tol 1e-12), T=1 alpha={single.ravel().tolist()}")


def test_05_loss_semantics(verdict):
    per_patient = [[1.0, 1.0, 1.0, 1.0], [5.0]]
    got = corpus_loss(per_patient)
    window_mean = float(np.mean([v for p in per_patient for v in p]))
    verdict(5, got == 3.0, f"corpus_loss = {got!r} (patient-weighted 3.0; window-weighted "
            f"would be {window_mean})")


def test_06_imputation_golden(verdict, tmp_path):
    records, _ = read_raw(GOLDEN / "raw")
    specs = read_specs(GOLDEN / "specs.tsv")
    mismatched = []
    for r in records:
        for path in write_grid(tmp_path, impute_grid(r, specs)):
            if path.read_bytes() != (GOLDEN / "expected" / path.name).read_bytes():
                mismatched.append(path.name)
    tiers, classes = set(), set()
    for r in records:
        mask = read_grid(GOLDEN / "expected" / f"{r.patient_id}.grid.tsv").mask
        tiers |= set(mask.ravel().tolist())
        classes |= {s.var_class for j, s in enumerate(specs) if mask[:, j].size}
    ok = (not mismatched and len(records) == 10 and tiers == {0, 1, 2, 3}
          and classes == {"periodic", "aperiodic", "lab"})
    verdict(6, ok, f"{len(records)} patients, {2 * len(records) - len(mismatched)}/"
            f"{2 * len(records)} files byte-identical, tiers {sorted(tiers)}, "
            f"classes {sorted(classes)}")


def test_07_metric_oracles(verdict):
    rng = np.random.default_rng(7)
    worst, n_sets, n_tied = 0.0, 0, 0
    while n_sets < 200:
        n = int(rng.integers(2, 31))
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            continue
        s = rng.integers(0, 5, n) / 4 if n_sets % 2 else rng.normal(size=n)
        n_tied += len(set(s.tolist())) < n
        worst = max(worst, abs(auroc(s, y) - oracles.auroc_pairs(s, y)),
                    abs(auprc(s, y) - oracles.auprc_steps(s, y)))
        n_sets += 1
    verdict(7, worst <= 1e-12, f"{n_sets} sets ({n_tied} with ties), max |diff| vs "
            f"brute force {worst:.1e} (<= 1e-12)")


def test_08_early_stopping(verdict):
    traces = {
        "strictly decreasing": ([10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0, -1], 10, None),
        "10 equal after a decrease": ([5] + [4] * 11, 10, 12),
        "decrease inside the window": ([5, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 3], 10, None),
        "[3,2,1,1,1,...] patience 3": ([3, 2, 1, 1, 1, 1, 1, 1], 3, 6),
    }
    bad = []
    for name, (losses, patience, fires_at) in traces.items():
        first = next((k for k in range(1, len(losses) + 1)
                      if early_stop(losses[:k], patience)), None)
        if first != fires_at:
            bad.append(name)
    stopper = EarlyStopper(patience=3)
    for k, v in enumerate([3, 2, 1, 1, 1, 1], start=1):
        stopper.update(v, state=k)
    if stopper.best_epoch != 3 or stopper.history[stopper.best_epoch - 1] != 1:
        bad.append("best checkpoint")
    verdict(8, not bad, f"{len(traces) + 1 - len(bad)}/{len(traces) + 1} scripted traces "
            "reproduced" + (f"; wrong: {bad}" if bad else "; best checkpoint at loss 1, epoch 3"))


# -- 9: overfit ------------------------------------------------------------------

OVERFIT_LR = 0.01


@pytest.mark.parametrize("kind", ["s2s_ae", "s2s_f", "s2s_f_a"])
def test_09_overfit_one_patient(verdict, kind):
    cfg = GeneratorConfig(n_patients=1, n_vars=16, stay_range=(72.0, 72.0), noise_scale=0.0,
                          seed=9)
    records, _, table = generate(cfg)
    pid = records[0].patient_id
    split = SplitSpec(0, [pid], [], [], [])
    _, grids = prepare_replicate(records, table, split)
    target = "past" if kind == "s2s_ae" else "future"
    windows = make_training_windows(grids, [pid], 12, target)
    # default representation size (94); one patient means one update per epoch
    tc = TrainConfig(kind, T=12, lr_grid=(OVERFIT_LR,), max_epochs=500, patience=500)
    t0 = time.perf_counter()
    _, log = train(kind, windows, windows, tc)
    seconds = time.perf_counter() - t0
    # the patient's windows are both sets, so val_loss is the exact post-epoch training loss
    first = next((k for k, v in enumerate(log.val_loss, 1) if v < 0.01 * log.initial_val_loss),
                 None)
    final = log.val_loss[-1] / log.initial_val_loss
    verdict(9, first is not None and seconds < 120,
            f"{kind}: loss below 1% of epoch-0 loss at epoch {first} (<= 500); final "
            f"{100 * final:.2f}% after {log.stop_epoch} epochs; {seconds:.0f}s (< 120s)")


# -- 10-13: synthetic cohort experiments ----------------------------------------------

def _experiment(null: bool):
    gen = GeneratorConfig(seed=0, **({"death_coef": 0.0, "discharge_coef": 0.0} if null else {}))
    records, _, table = generate(gen)
    records = filter_cohort(records)
    splits = make_splits([r.patient_id for r in records], seed=0)
    probe = ProbeConfig(classifier_hidden=16, lr_grid=(0.01,), min_updates=100)
    if null:
        cfg = ExperimentConfig(m=16, lr_grid=(0.01,), max_epochs=12, directions=(),
                               tasks=("discharge",), fractions=(1.0,), raw_layers=(1, 3),
                               probe=probe)
    else:
        cfg = ExperimentConfig(models=REPRESENTATIONS, m=16, lr_grid=(0.01,), max_epochs=12,
                               directions=("future",), tasks=("discharge",),
                               fractions=LOW_FRACTIONS, raw_layers=(3,), probe=probe)
    t0 = time.perf_counter()
    results = [run_replicate(records, table, splits[r], cfg) for r in REPLICATES]
    return records, splits, results, time.perf_counter() - t0


@pytest.fixture(scope="module")
def cohort_run():
    return _experiment(null=False)


@pytest.fixture(scope="module")
def null_run():
    return _experiment(null=True)


def _value(res, approach, task, metric, fraction=1.0):
    (c,) = [c for c in res.cells if c.key() == (approach, task, metric, fraction)]
    return c.value


def test_10_signal_probe_ordering(verdict, note, cohort_run):
    _, _, results, seconds = cohort_run
    mse = {k: [_value(r, k, "future", "mse_prediction") for r in results] for k in REPRESENTATIONS}
    forecaster_wins = sum(all(mse[k][i] < mse["pca"][i] for k in ("s2s_f", "s2s_f_a"))
                          for i in range(len(results)))
    mean = {k: float(np.mean(v)) for k, v in mse.items()}
    stage_seconds = sum(v for r in results for k, v in r.seconds.items()
                        if k == "preprocess" or k.startswith(("train:", "signal:")))
    note(10, "future-probe MSE per replicate: " + "; ".join(
        f"{k} " + ",".join(f"{v:.3f}" for v in vals) for k, vals in mse.items()))
    ok = forecaster_wins >= 4 and mean["s2s_f_a"] <= mean["s2s_f"] and seconds < 1200
    verdict(10, ok, f"(a) S2S-F and S2S-F-A below PCA in {forecaster_wins}/5 replicates (>= 4); "
            f"(b) mean MSE S2S-F-A {mean['s2s_f_a']:.4f} <= S2S-F {mean['s2s_f']:.4f}; "
            f"whole 5-replicate run {seconds / 60:.1f} min (< 20; training and probes alone "
            f"{stage_seconds / 60:.1f} min)")


def test_11_limited_labels(verdict, note, cohort_run):
    _, _, results, _ = cohort_run
    wins, details, smallest_wins = 0, [], 0
    for res in results:
        best = best_representation(res.selections, "discharge", REPRESENTATIONS, LOW_FRACTIONS)
        pairs = [(_value(res, best, "discharge", "auprc", f),
                  _value(res, "raw_lstm3", "discharge", "auprc", f)) if best else (math.nan,) * 2
                 for f in LOW_FRACTIONS]
        usable = [(a, b) for a, b in pairs if math.isfinite(a) and math.isfinite(b)]
        rep_mean = float(np.mean([a for a, _ in usable])) if usable else math.nan
        raw_mean = float(np.mean([b for _, b in usable])) if usable else math.nan
        won = bool(usable) and rep_mean > raw_mean
        wins += won
        smallest_wins += math.isfinite(pairs[0][0]) and pairs[0][0] > pairs[0][1]
        details.append(f"r{res.replicate} {best} {rep_mean:.3f} vs {raw_mean:.3f}")
    note(11, f"at 1% alone the representation wins {smallest_wins}/5; 100% labels not run "
             "(its direction is not asserted)")
    verdict(11, wins >= 4, f"LSTM-1 on best representation beats LSTM-3 raw in mean AUPRC over "
            f"1/2/5% labels in {wins}/5 replicates (>= 4): " + "; ".join(details))


FLOOR_HOURS, CAP_HOURS = 72, 240


def _time_only_auroc(records, split):
    """AUROC on test2 windows of a scorer that knows only the window's end hour."""
    stays = {r.patient_id: (r.stay_hours, r.outcome) for r in records}

    class _L:
        def __init__(self, L):
            self.L = L

    def windows(ids):
        grids = {pid: _L(math.ceil(stays[pid][0])) for pid in ids}
        ls = label_windows(grids, stays, "discharge")
        return (np.concatenate([p.end_times for p in ls.patients]),
                np.concatenate([p.labels for p in ls.patients]))

    t_fit, y_fit = windows(split.validation)
    rate = {t: y_fit[t_fit == t].mean() for t in np.unique(t_fit)}
    t_eval, y_eval = windows(split.test2)
    return auroc([rate.get(t, 0.0) for t in t_eval], y_eval)


def test_12_null_signal(verdict, note, null_run):
    records, splits, results, seconds = null_run
    approaches = sorted({c.approach for c in results[0].cells if c.metric == "auroc"})
    mean = {a: float(np.nanmean([_value(r, a, "discharge", "auroc") for r in results]))
            for a in approaches}
    outside = [a for a, v in mean.items() if not 0.45 <= v <= 0.55]
    time_only = float(np.mean([_time_only_auroc(records, s) for s in splits]))
    note(12, f"a scorer given only the window's end hour reaches test2 AUROC {time_only:.3f} on "
             "the null cohort: the stay floor makes every window before hour 48 negative")
    # past the 72 h floor and before the 240 h cap the null hazard is flat in time
    flat = {}
    for a in approaches:
        values = []
        for res in results:
            kept = res.test2_scores[(a, "discharge", 1.0)]
            keep = (kept.end_times >= FLOOR_HOURS) & (kept.end_times < CAP_HOURS - 24)
            values.append(auroc(kept.scores[keep], kept.labels[keep]))
        flat[a] = float(np.mean(values))
    note(12, f"same classifiers on test2 windows ending in [{FLOOR_HOURS}, {CAP_HOURS - 24}) h, "
             "where the null hazard does not depend on time: "
             + ", ".join(f"{a}={v:.3f}" for a, v in flat.items()))
    verdict(12, not outside, "mean test2 AUROC over 5 replicates with hazard coefficients 0: "
            + ", ".join(f"{a}={v:.3f}" for a, v in mean.items())
            + f" (band [0.45, 0.55]); {seconds / 60:.1f} min")


def test_13_split_audit(verdict, cohort_run):
    records, splits, results, _ = cohort_run
    ids = [r.patient_id for r in records]
    cells = [c for res in results for c in res.cells]
    audit_splits(splits, ids)
    audit_report(cells, splits)
    caught = 0
    s = splits[0]
    leaked = dataclasses.replace(s, test2=s.test2 + [s.train[0]])
    t1_cell = Cell("pca", "discharge", "auroc", 1.0, 0, 0.5, "test1", tuple(s.test1))
    stray = Cell("pca", "discharge", "auroc", 1.0, 0, 0.5, "test2", (s.validation[0],))
    for check in (lambda: audit_splits([leaked], ids), lambda: audit_report([t1_cell], splits),
                  lambda: audit_report([stray], splits)):
        try:
            check()
        except SplitAuditError:
            caught += 1
    verdict(13, caught == 3, f"{len(splits)} replicate splits partition {len(ids)} patients; "
            f"{len(cells)} reported cells all scored on their replicate's test2; "
            f"{caught}/3 planted violations caught")
