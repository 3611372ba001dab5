"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both implementations are imported directly, so the ``S2SREP_BACKEND`` flag
does not matter here. Prints one row per (kernel, shape) with the median
wall time of each path and the speed-up of numba over numpy.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from s2srep.kernels import _numba as nb
from s2srep.kernels import _numpy as npk


def _median_time(fn, repeat):
    fn()  # compile / warm caches
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def cases(rng):
    for B, m in ((16, 64), (480, 16), (4096, 16)):
        pre = rng.normal(size=(B, 4 * m))
        c = rng.normal(size=(B, m))
        hc, gates = npk.lstm_gates_forward(pre, c)
        d = rng.normal(size=hc.shape)
        yield f"gates_forward B={B} m={m}", lambda k, a=pre, b=c: k.lstm_gates_forward(a, b)
        yield (f"gates_backward B={B} m={m}",
               lambda k, a=d, b=gates, cc=c: k.lstm_gates_backward(a, b, cc))
    for L, B, m in ((12, 480, 16), (200, 16, 64), (200, 4, 64)):
        xp = rng.normal(size=(L, B, 4 * m))
        wh = rng.normal(size=(m, 4 * m)) / np.sqrt(m)
        out, gates = npk.lstm_sequence_forward(xp, wh)
        d = rng.normal(size=out.shape)
        yield (f"sequence_forward L={L} B={B} m={m}",
               lambda k, a=xp, w=wh: k.lstm_sequence_forward(a, w))
        yield (f"sequence_backward L={L} B={B} m={m}",
               lambda k, a=d, g=gates, o=out, w=wh: k.lstm_sequence_backward(a, g, o, w))
    for n in (20, 500):
        times = np.sort(rng.uniform(0, 240, n))
        vals = rng.normal(size=n)
        yield (f"impute_column n_obs={n}",
               lambda k, t=times, v=vals: k.impute_column(t, v, 240, 5.0, 0.0))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':42s} {'numpy ms':>10s} {'numba ms':>10s} {'speed-up':>9s}")
    for name, call in cases(rng):
        t_np = _median_time(lambda: call(npk), args.repeat)
        t_nb = _median_time(lambda: call(nb), args.repeat)
        print(f"{name:42s} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:8.2f}x")


if __name__ == "__main__":
    main()
