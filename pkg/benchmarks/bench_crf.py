#!/usr/bin/env python3
"""Benchmark the compiled CRF kernels against the pure NumPy fallback.

Times constrained Viterbi decoding and NLL+gradient computation over random
instances at a few sequence lengths.

    python3 benchmarks/bench_crf.py [--repeats 200] [--lengths 10,20,40,80]
"""

import argparse
import time

import numpy as np

from coordkit import _crf_numpy
from coordkit.crf import (
    end_mask,
    masked_scores,
    position_mask,
    start_mask,
    transition_mask,
)
from coordkit.schema import TokenSpan

try:
    from coordkit import _crfc
except ImportError:
    _crfc = None

L = 6


def make_problem(rng, m):
    s = int(rng.integers(1, m - 1))
    e = int(rng.integers(s + 1, m))
    em = rng.normal(0.0, 4.0, size=(m, L))
    trans = masked_scores(rng.normal(0.0, 2.0, size=(L, L)), transition_mask())
    start = masked_scores(rng.normal(0.0, 2.0, size=L), start_mask())
    end = masked_scores(rng.normal(0.0, 2.0, size=L), end_mask())
    allowed = np.ascontiguousarray(position_mask(m, TokenSpan(s, e)), dtype=np.uint8)
    gold, _ = _crf_numpy.viterbi(em, trans, start, end, allowed)
    return em, trans, start, end, allowed, np.asarray(gold, dtype=np.int64)


def bench(kernel, problems, op):
    start = time.perf_counter()
    for em, trans, st, en, allowed, gold in problems:
        if op == "viterbi":
            kernel.viterbi(em, trans, st, en, allowed)
        else:
            kernel.nll_gradients(em, trans, st, en, allowed, gold)
    return time.perf_counter() - start


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--lengths", default="10,20,40,80")
    args = parser.parse_args()
    lengths = [int(x) for x in args.lengths.split(",")]

    if _crfc is None:
        print("compiled kernels unavailable; timing the NumPy fallback only")

    header = f"{'op':<10} {'m':>4} {'numpy (s)':>10}"
    if _crfc is not None:
        header += f" {'compiled (s)':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))

    rng = np.random.default_rng(0)
    for m in lengths:
        problems = [make_problem(rng, m) for _ in range(args.repeats)]
        for op in ("viterbi", "nll_grad"):
            t_numpy = bench(_crf_numpy, problems, op)
            row = f"{op:<10} {m:>4} {t_numpy:>10.4f}"
            if _crfc is not None:
                t_compiled = bench(_crfc, problems, op)
                row += f" {t_compiled:>12.4f} {t_numpy / t_compiled:>7.1f}x"
            print(row)

    if _crfc is not None:
        # Agreement spot check: identical paths and matching losses.
        for m in lengths:
            em, trans, st, en, allowed, gold = make_problem(rng, m)
            p1, s1 = _crf_numpy.viterbi(em, trans, st, en, allowed)
            p2, s2 = _crfc.viterbi(em, trans, st, en, allowed)
            assert list(p1) == list(p2) and abs(s1 - s2) < 1e-9
            n1 = _crf_numpy.nll_gradients(em, trans, st, en, allowed, gold)[0]
            n2 = _crfc.nll_gradients(em, trans, st, en, allowed, gold)[0]
            assert abs(n1 - n2) < 1e-9
        print("\nbackends agree on decoded paths and losses")


if __name__ == "__main__":
    main()
