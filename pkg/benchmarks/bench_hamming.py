"""Benchmark the compiled Hamming kernel against the pure-NumPy fallback.

Times packed one-vs-many distances and the full pairwise matrix over a grid
of corpus sizes and code widths, and cross-checks that both backends return
identical results. Run with:

    python3 benchmarks/bench_hamming.py [--repeats N]
"""

import argparse
import time

import numpy as np

from robusthash import hamming
from robusthash.hamming import _fallback

try:
    from robusthash.hamming import _kernels
except ImportError:
    _kernels = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench(repeats):
    if _kernels is None:
        print("compiled kernel unavailable; nothing to compare")
        return
    rng = np.random.default_rng(0)
    print(f"active backend: {hamming.BACKEND}")
    print(f"{'case':<28}{'cython':>12}{'numpy':>12}{'speedup':>10}")
    for n, k in ((1_000, 16), (10_000, 16), (100_000, 16),
                 (10_000, 64), (100_000, 64)):
        codes = rng.choice(np.array([-1, 1], dtype=np.int8), size=(n, k))
        packed = hamming.pack_codes(codes)
        query = packed[0]
        fast = timeit(lambda: _kernels.packed_distances(query, packed),
                      repeats)
        slow = timeit(lambda: _fallback.packed_distances(query, packed),
                      repeats)
        assert np.array_equal(_kernels.packed_distances(query, packed),
                              _fallback.packed_distances(query, packed))
        print(f"{f'1-vs-{n} (k={k})':<28}{fast * 1e3:>10.3f}ms"
              f"{slow * 1e3:>10.3f}ms{slow / fast:>9.1f}x")
    for n, k in ((500, 16), (2_000, 16), (2_000, 64)):
        codes = rng.choice(np.array([-1, 1], dtype=np.int8), size=(n, k))
        packed = hamming.pack_codes(codes)
        fast = timeit(lambda: _kernels.pairwise_distances(packed, packed),
                      repeats)
        slow = timeit(lambda: _fallback.pairwise_distances(packed, packed),
                      repeats)
        assert np.array_equal(
            _kernels.pairwise_distances(packed, packed),
            _fallback.pairwise_distances(packed, packed))
        print(f"{f'{n}x{n} matrix (k={k})':<28}{fast * 1e3:>10.3f}ms"
              f"{slow * 1e3:>10.3f}ms{slow / fast:>9.1f}x")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repetitions per case (best is kept)")
    bench(parser.parse_args().repeats)
