"""Compare the compiled and pure-Python Monte Carlo kernels.

    python benchmarks/bench_kernels.py [--pulses N] [--sparse-pulses N] [--repeat R]

Both kernels draw identical samples; this script checks that while timing them.
"""

import argparse
import time

import numpy as np

from noonchip import backend
from noonchip import montecarlo as mc
from noonchip.chip import DeviceConfig
from noonchip.tags import get_qualification


def best_time(fn, repeat):
    best, result = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench_dense(name, cdf, n, repeat):
    return best_time(lambda: backend.pulse_patterns(1, 0, n, cdf, name), repeat)


def bench_sparse(name, args, repeat):
    return best_time(lambda: backend.sparse_coincidences(*args, name), repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pulses", type=int, default=2_000_000, help="pulses for the dense sampler")
    ap.add_argument("--sparse-pulses", type=int, default=10**11, help="pulses for the skipping counter")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    names = backend.available()
    print(f"backends: {', '.join(names)} (default {backend.NAME})")

    cfg = DeviceConfig(mean_pairs=0.1)
    probs = mc.click_probabilities(cfg, 0.3)
    cdf = mc._cdf(probs)
    dense = {}
    for name in names:
        t, out = bench_dense(name, cdf, args.pulses, args.repeat)
        dense[name] = out
        print(f"pulse_patterns  {name:7s} {args.pulses:>14,d} pulses  {t:8.3f} s  {t / args.pulses * 1e9:8.1f} ns/pulse")

    cfg = DeviceConfig(mean_pairs=0.005, pair_statistics="poissonian", mode_overlap=0.9)
    probs = mc.click_probabilities(cfg, 0.0)
    q = get_qualification("single_source")
    rel = mc.relevant_patterns(q)
    p_rel = float(probs[rel].sum())
    sparse_args = (7, args.sparse_pulses, p_rel, rel, mc._cdf(probs[rel] / p_rel), q.start_array(), q.stop_array(), 8)
    sparse = {}
    for name in names:
        t, out = bench_sparse(name, sparse_args, args.repeat)
        sparse[name] = out
        events = out[2]
        print(
            f"sparse_counts   {name:7s} {args.sparse_pulses:>14,d} pulses  {t:8.3f} s  "
            f"{t / max(events, 1) * 1e9:8.1f} ns/event ({events:,d} events)"
        )

    if len(names) == 2:
        same = np.array_equal(dense["cython"], dense["python"]) and all(
            np.array_equal(a, b) for a, b in zip(sparse["cython"], sparse["python"])
        )
        print(f"outputs identical: {same}")


if __name__ == "__main__":
    main()
