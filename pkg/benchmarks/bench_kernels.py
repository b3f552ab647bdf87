"""Benchmark the numba PSD-projection kernel against the pure-numpy fallback.

Run directly:  python3 benchmarks/bench_kernels.py
The numpy path can also be forced package-wide with CVXROBUST_DISABLE_NUMBA=1.
"""

import time

import numpy as np

from cvxrobust.kernels import NUMBA_ENABLED, _project_psd_svecs_np, project_psd_svecs


def bench(fn, vec, sides, offsets, repeats):
    out = np.empty_like(vec)
    fn(vec, sides, offsets, out)  # warm-up (also triggers JIT compilation)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(vec, sides, offsets, out)
    return (time.perf_counter() - t0) / repeats, out


def main():
    rng = np.random.default_rng(0)
    cases = [
        ("many small blocks", 400, 31),
        ("few medium blocks", 40, 100),
        ("one large block", 1, 500),
    ]
    print(f"numba available: {NUMBA_ENABLED}")
    print(f"{'case':24s} {'blocks':>6s} {'side':>5s} {'numpy ms':>9s} {'numba ms':>9s} {'speedup':>8s}")
    for name, nblk, side in cases:
        ln = side * (side + 1) // 2
        vec = rng.standard_normal(nblk * ln)
        sides = np.full(nblk, side, dtype=np.int64)
        offsets = (np.arange(nblk) * ln).astype(np.int64)
        repeats = max(3, int(2e6 / (nblk * side**2)))
        t_np, out_np = bench(_project_psd_svecs_np, vec, sides, offsets, repeats)
        if NUMBA_ENABLED:
            t_nb, out_nb = bench(
                lambda v, s, o, out: project_psd_svecs(v, s, o, out=out),
                vec, sides, offsets, repeats,
            )
            assert np.allclose(out_np, out_nb, atol=1e-10), "kernel paths disagree"
            print(f"{name:24s} {nblk:6d} {side:5d} {t_np*1e3:9.2f} {t_nb*1e3:9.2f} {t_np/t_nb:8.2f}x")
        else:
            print(f"{name:24s} {nblk:6d} {side:5d} {t_np*1e3:9.2f} {'n/a':>9s} {'n/a':>8s}")


if __name__ == "__main__":
    main()
