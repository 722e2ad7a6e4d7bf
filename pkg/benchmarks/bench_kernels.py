"""Time the numba-JIT pixel kernels against the pure-numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py

Both implementations are imported directly, so this compares them in one
process regardless of the AVBINDER_NUMBA selection. The JIT path is only
timed when numba is active (otherwise the decorator is a no-op and the
"JIT" function is plain python).
"""

import time

import numpy as np

from avbinder import kernels


def bench(fn, *args, repeats=20):
    fn(*args)  # warm-up / JIT compile
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def main():
    rng = np.random.default_rng(0)
    print(f"numba active: {kernels.NUMBA_ENABLED}")
    print(f"{'kernel':<18} {'size':<12} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for height, width in [(480, 640), (1080, 1920)]:
        frame = rng.integers(0, 256, (height, width)).astype(np.int32)
        flat = frame.astype(np.uint8).ravel()

        t_np = bench(kernels._sobel_numpy, frame)
        if kernels.NUMBA_ENABLED:
            t_jit = bench(kernels._sobel_jit, frame)
            gx_a, gy_a = kernels._sobel_jit(frame)
            gx_b, gy_b = kernels._sobel_numpy(frame)
            assert np.array_equal(gx_a, gx_b) and np.array_equal(gy_a, gy_b)
            ratio = f"{t_np / t_jit:6.1f}x"
        else:
            t_jit, ratio = float("nan"), "     --"
        print(f"{'sobel':<18} {height}x{width:<7} {t_np * 1e3:8.2f}ms {t_jit * 1e3:8.2f}ms {ratio:>8}")

        t_np = bench(kernels._hist256_numpy, flat)
        if kernels.NUMBA_ENABLED:
            t_jit = bench(kernels._hist256_jit, flat)
            assert np.array_equal(kernels._hist256_jit(flat), kernels._hist256_numpy(flat))
            ratio = f"{t_np / t_jit:6.1f}x"
        else:
            t_jit, ratio = float("nan"), "     --"
        print(f"{'histogram-256':<18} {height}x{width:<7} {t_np * 1e3:8.2f}ms {t_jit * 1e3:8.2f}ms {ratio:>8}")


if __name__ == "__main__":
    main()
