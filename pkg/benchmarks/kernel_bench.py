#!/usr/bin/env python3
"""Compare the numba and numpy kernel backends on the clustering hot loops.

Times ``mc_refine`` (the dominant cost of a sweep), ``partition_q``, and
``solve_entropy_temperature`` on matched inputs, checks that both
backends return identical results, and prints per-kernel speedups.
Backends are fetched with ``modkit.kernels.get_backend``, so the
``MODKIT_KERNELS`` flag does not affect this script.

    python3 benchmarks/kernel_bench.py [--sizes 16 64 128] [--repeats 5]
"""

import argparse
import statistics
import time

import numpy as np

from modkit.kernels import NUMBA_AVAILABLE, get_backend
from modkit.numerics import RandomSource


def random_adjacency(seed: int, m: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    a = np.abs(rng.normal(size=(m, m)))
    a = (a + a.T) / 2.0
    np.fill_diagonal(a, 0.0)
    return a / a.sum()


def mc_inputs(m: int, steps: int, seed: int):
    rng = RandomSource(seed)
    units = rng.integers(0, m, size=steps).astype(np.int64)
    uniforms = rng.uniform(size=steps)
    return units, uniforms


def time_call(fn, repeats: int) -> float:
    """Median wall time of fn() over repeats, in seconds."""
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_mc_refine(impl, m: int, steps: int, repeats: int):
    adj = random_adjacency(m, m)
    d = adj.sum(axis=1)
    labels0 = np.zeros(m, dtype=np.int64)
    units, uniforms = mc_inputs(m, steps, 99)
    out = impl.mc_refine(adj, d, labels0.copy(), m, 0.15, units, uniforms, 512)
    t = time_call(
        lambda: impl.mc_refine(adj, d, labels0.copy(), m, 0.15, units,
                               uniforms, 512),
        repeats)
    return t, out


def bench_partition_q(impl, m: int, repeats: int):
    adj = random_adjacency(m + 1, m)
    d = adj.sum(axis=1)
    labels = (np.arange(m) % 5).astype(np.int64)

    def run():
        total = 0.0
        for _ in range(200):
            total += impl.partition_q(adj, d, labels, 5)
        return total

    return time_call(run, repeats), run()


def bench_solve_temperature(impl, repeats: int):
    rng = np.random.default_rng(17)
    scores = rng.normal(size=24)

    def run():
        out = None
        for _ in range(2000):
            out = impl.solve_entropy_temperature(scores, 0.15, 1e-12, 1e12,
                                                 1e-6, 200)
        return out

    return time_call(run, repeats), run()


def mc_agree(a, b) -> bool:
    """Same partitions; scores may differ by summation-order ulps."""
    best_a, q_a, final_a, _ = a
    best_b, q_b, final_b, _ = b
    return (np.array_equal(best_a, best_b) and np.array_equal(final_a, final_b)
            and abs(q_a - q_b) <= 1e-12)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[16, 64, 128])
    parser.add_argument("--steps-per-unit", type=int, default=100)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not NUMBA_AVAILABLE:
        print("numba is not importable; nothing to compare")
        return 1
    np_impl = get_backend("numpy")
    nb_impl = get_backend("numba")

    # First calls trigger JIT compilation; keep that out of the timings.
    bench_mc_refine(nb_impl, 8, 100, 1)
    bench_partition_q(nb_impl, 8, 1)
    bench_solve_temperature(nb_impl, 1)

    rows = []
    for m in args.sizes:
        steps = args.steps_per_unit * m
        t_np, out_np = bench_mc_refine(np_impl, m, steps, args.repeats)
        t_nb, out_nb = bench_mc_refine(nb_impl, m, steps, args.repeats)
        assert mc_agree(out_np, out_nb), f"backend mismatch in mc_refine m={m}"
        rows.append((f"mc_refine m={m} steps={steps}", t_np, t_nb))

    t_np, q_np = bench_partition_q(np_impl, 64, args.repeats)
    t_nb, q_nb = bench_partition_q(nb_impl, 64, args.repeats)
    assert abs(q_np - q_nb) <= 1e-12, "backend mismatch in partition_q"
    rows.append(("partition_q m=64 x200", t_np, t_nb))

    t_np, s_np = bench_solve_temperature(np_impl, args.repeats)
    t_nb, s_nb = bench_solve_temperature(nb_impl, args.repeats)
    assert s_np[1] == s_nb[1] and abs(s_np[0] - s_nb[0]) <= 1e-9 * s_np[0], \
        "backend mismatch in solve_entropy_temperature"
    rows.append(("solve_entropy_temperature x2000", t_np, t_nb))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    for name, t_np, t_nb in rows:
        print(f"{name:<{width}}  {t_np:>9.4f}s  {t_nb:>9.4f}s  "
              f"{t_np / t_nb:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
