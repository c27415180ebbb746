"""Benchmark the jitted kernels against their pure-numpy fallbacks.

Run in the default (jitted) configuration:

    python3 benchmarks/bench_kernels.py

Both variants are timed in-process; the active path (what the package uses)
is jitted unless MHDKIT_NO_NUMBA is set. The script also cross-checks that
both paths agree on results.
"""

from __future__ import annotations

import time

import numpy as np

from mhdkit import _kernels
from mhdkit._kernels import (_mix_log_rows_loop, _mix_log_rows_vec,
                             _perm_deltas_loop, _perm_deltas_vec,
                             _truncated_sample_loop, _truncated_sample_vec,
                             METRIC_CHRF, NUMBA_DISABLED)

try:
    from numba import njit
    jit_sample = njit(cache=True)(_truncated_sample_loop)
    jit_mix = njit(cache=True)(_mix_log_rows_loop)
    jit_perm = _kernels.perm_deltas_jit
    HAVE_NUMBA = jit_perm is not None
except ImportError:
    HAVE_NUMBA = False


def timeit(fn, repeat: int = 5) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_truncated_sample():
    rng = np.random.default_rng(0)
    vocab = 64
    probs = rng.dirichlet(np.full(vocab, 0.3), size=2000)
    draws = rng.random(2000)

    def run(fn):
        def inner():
            for i in range(2000):
                fn(probs[i], 1, 0, 0.7, 0.0, draws[i])
        return inner

    rows = [("numpy fallback", timeit(run(_truncated_sample_vec)))]
    if HAVE_NUMBA:
        jit_sample(probs[0], 1, 0, 0.7, 0.0, 0.5)  # compile
        rows.append(("numba njit", timeit(run(jit_sample))))
        for i in range(0, 2000, 97):
            a = _truncated_sample_vec(probs[i], 1, 0, 0.7, 0.0, draws[i])
            b = jit_sample(probs[i], 1, 0, 0.7, 0.0, draws[i])
            assert (int(a[0]), bool(a[1])) == (int(b[0]), bool(b[1]))
    return "truncated sampling step (2000 calls, vocab 64)", rows


def bench_mix_log_rows():
    # Batch 1 is the case that matters: sampling decodes one prefix per step.
    rng = np.random.default_rng(1)
    vocab = 256
    lex = rng.dirichlet(np.full(vocab, 0.5))
    bigram = rng.dirichlet(np.full(vocab, 0.5), size=1)

    def run(fn):
        def inner():
            for _ in range(3000):
                fn(lex, bigram, 0.7)
        return inner

    rows = [("numpy fallback", timeit(run(_mix_log_rows_vec)))]
    if HAVE_NUMBA:
        jit_mix(lex, bigram, 0.7)
        rows.append(("numba njit", timeit(run(jit_mix))))
        np.testing.assert_array_equal(_mix_log_rows_vec(lex, bigram, 0.7),
                                      jit_mix(lex, bigram, 0.7))
    return "table-model row mixing (3000 calls, batch 1, vocab 256)", rows


def bench_perm_deltas():
    rng = np.random.default_rng(2)
    n_seg, rounds = 400, 10_000
    stats_a = rng.integers(0, 40, size=(n_seg, 24)).astype(np.float64)
    stats_b = rng.integers(0, 40, size=(n_seg, 24)).astype(np.float64)
    swap = (rng.random((rounds, n_seg)) < 0.5).astype(np.uint8)
    args = (stats_a, stats_b, swap, METRIC_CHRF, 8, 2.0, True)

    rows = [("numpy fallback", timeit(lambda: _perm_deltas_vec(*args),
                                      repeat=3))]
    if HAVE_NUMBA and jit_perm is not None:
        jit_perm(stats_a[:4], stats_b[:4], swap[:4, :4], METRIC_CHRF, 8,
                 2.0, True)
        rows.append(("numba njit", timeit(lambda: jit_perm(*args),
                                          repeat=3)))
        np.testing.assert_allclose(_perm_deltas_vec(*args), jit_perm(*args),
                                   atol=1e-9)
    return f"randomization test ({rounds} permutations, {n_seg} segments)", \
        rows


def main() -> None:
    active = "numpy fallback (MHDKIT_NO_NUMBA set)" if NUMBA_DISABLED \
        else "numba njit"
    print(f"active kernel path: {active}\n")
    for bench in (bench_truncated_sample, bench_mix_log_rows,
                  bench_perm_deltas):
        title, rows = bench()
        print(title)
        base = rows[0][1]
        for name, seconds in rows:
            speedup = base / seconds if seconds else float("inf")
            print(f"  {name:16s} {seconds * 1e3:9.2f} ms"
                  + (f"  ({speedup:.1f}x vs fallback)"
                     if name != rows[0][0] else ""))
        print()


if __name__ == "__main__":
    main()
