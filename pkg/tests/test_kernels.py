"""Numba and numpy kernels agree with each other and with the slow oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from s2srep import kernels
from s2srep.kernels import _numpy

numba_kernels = pytest.importorskip("s2srep.kernels._numba")

TIERS = ["observed", "forward-filled", "history-mean", "population-median"]
BACKENDS = [_numpy, numba_kernels]


def gate_inputs(seed, B=3, m=4):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(B, 4 * m)) * 2, rng.normal(size=(B, m))


@pytest.mark.parametrize("seed", range(5))
def test_gate_forward_parity(seed):
    pre, c = gate_inputs(seed)
    (h1, g1), (h2, g2) = (k.lstm_gates_forward(pre, c) for k in BACKENDS)
    np.testing.assert_allclose(h1, h2, rtol=0, atol=1e-13)
    np.testing.assert_allclose(g1, g2, rtol=0, atol=1e-13)


def test_gate_forward_matches_oracle_step():
    rng = np.random.default_rng(3)
    m, k = 3, 2
    x, h, c = rng.normal(size=(2, k)), rng.normal(size=(2, m)), rng.normal(size=(2, m))
    Wx, Wh, b = rng.normal(size=(k, 4 * m)), rng.normal(size=(m, 4 * m)), rng.normal(size=4 * m)
    hc, _ = kernels.lstm_gates_forward(x @ Wx + h @ Wh + b, c)
    h_ref, c_ref = oracles.lstm_step(x, h, c, Wx, Wh, b)
    np.testing.assert_allclose(hc[:, :m], h_ref, atol=1e-12)
    np.testing.assert_allclose(hc[:, m:], c_ref, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_gate_backward_parity(seed):
    pre, c = gate_inputs(seed)
    _, gates = _numpy.lstm_gates_forward(pre, c)
    d_hc = np.random.default_rng(seed + 100).normal(size=(3, 8))
    (a1, b1), (a2, b2) = (k.lstm_gates_backward(d_hc, gates, c) for k in BACKENDS)
    np.testing.assert_allclose(a1, a2, atol=1e-13)
    np.testing.assert_allclose(b1, b2, atol=1e-13)


def test_gate_backward_matches_finite_differences():
    pre, c = gate_inputs(11, B=2, m=2)
    w = np.random.default_rng(0).normal(size=(2, 4))
    d_pre, d_c = kernels.lstm_gates_backward(w, kernels.lstm_gates_forward(pre, c)[1], c)
    eps = 1e-6
    for arr, grad in ((pre, d_pre), (c, d_c)):
        num = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + eps
            up = (kernels.lstm_gates_forward(pre, c)[0] * w).sum()
            arr[idx] = old - eps
            down = (kernels.lstm_gates_forward(pre, c)[0] * w).sum()
            arr[idx] = old
            num[idx] = (up - down) / (2 * eps)
        np.testing.assert_allclose(grad, num, atol=1e-8)


@pytest.mark.parametrize("seed", range(4))
def test_sequence_parity(seed):
    rng = np.random.default_rng(seed)
    L, B, m = 7, 3, 4
    xp = rng.normal(size=(L, B, 4 * m))
    Wh = rng.normal(size=(m, 4 * m)) * 0.5
    (o1, g1), (o2, g2) = (k.lstm_sequence_forward(xp, Wh) for k in BACKENDS)
    np.testing.assert_allclose(o1, o2, atol=1e-12)
    np.testing.assert_allclose(g1, g2, atol=1e-12)
    d_out = rng.normal(size=o1.shape)
    d1, d2 = (k.lstm_sequence_backward(d_out, g1, o1, Wh) for k in BACKENDS)
    np.testing.assert_allclose(d1, d2, atol=1e-12)


def test_sequence_equals_repeated_gate_steps():
    rng = np.random.default_rng(5)
    L, B, m = 5, 2, 3
    xp = rng.normal(size=(L, B, 4 * m))
    Wh = rng.normal(size=(m, 4 * m))
    out, _ = kernels.lstm_sequence_forward(xp, Wh)
    h = c = np.zeros((B, m))
    for t in range(L):
        hc, _ = kernels.lstm_gates_forward(xp[t] + h @ Wh, c)
        h, c = hc[:, :m], hc[:, m:]
        np.testing.assert_allclose(out[t], hc, atol=1e-13)


observations = st.lists(st.tuples(st.floats(0.0, 30.0), st.floats(-5.0, 5.0)), max_size=12)


@settings(max_examples=150, deadline=None)
@given(observations, st.integers(1, 32), st.sampled_from([1.0, 5.0, 24.0]))
def test_impute_matches_oracle(obs, n_rows, horizon):
    obs = sorted(obs, key=lambda p: p[0])
    times = np.array([t for t, _ in obs])
    values = np.array([v for _, v in obs])
    for k in BACKENDS:
        out, mask = k.impute_column(times, values, n_rows, horizon, 0.5)
        for r in range(1, n_rows + 1):
            val, tier = oracles.impute_cell(obs, r, horizon, 0.5)
            assert TIERS[mask[r - 1]] == tier
            assert out[r - 1] == pytest.approx(val, abs=1e-12)


def test_impute_empty_column():
    for k in BACKENDS:
        out, mask = k.impute_column(np.zeros(0), np.zeros(0), 4, 1.0, 7.0)
        assert out.tolist() == [7.0] * 4 and mask.tolist() == [kernels.POPULATION_MEDIAN] * 4


def test_dispatch_reports_backend():
    assert kernels.BACKEND in ("numba", "numpy")
