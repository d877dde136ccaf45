"""Compiled vs pure-Python peak-table kernel on random dependency trees.

    python benchmarks/bench_kernel.py [--pairs 300] [--sizes 5 10 20 40]
"""

import argparse
import math
import random
import sys
import time

import numpy as np

from attackwatch.corpus import DepTree
from attackwatch.embeddings import SemanticMatcher, SemEqConfig
from attackwatch._core import _pykernel

try:
    from attackwatch._core import _ckernel
except ImportError:
    _ckernel = None


def random_tree(rng, n, alphabet):
    lemmas = [rng.choice(alphabet) for _ in range(n)]
    order = list(range(n))
    rng.shuffle(order)
    heads = [0] * n
    for pos, node in enumerate(order[1:], start=1):
        heads[node] = order[rng.randrange(pos)] + 1
    return DepTree.build(list(zip(lemmas, heads)))


def workload(n, pairs, seed):
    rng = random.Random(seed)
    matcher = SemanticMatcher(None, SemEqConfig())
    out = []
    for _ in range(pairs):
        q, d = random_tree(rng, n, "ABCDEF"), random_tree(rng, n, "ABCDEF")
        out.append((q.arrays, d.arrays, matcher.matrix(q.lemmas, d.lemmas)))
    return out


def timed(fn, work, lam, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        for qa, da, m in work:
            fn(qa, da, m, math.sqrt(lam), lam, False)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=300)
    ap.add_argument("--sizes", type=int, nargs="+", default=[5, 10, 20, 40])
    ap.add_argument("--lam", type=float, default=0.5)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _ckernel is None:
        print("compiled extension not built; only the pure-Python backend is available", file=sys.stderr)
    print(f"{'nodes':>6}{'python ms/pair':>16}{'cython ms/pair':>16}{'speedup':>9}")
    for n in args.sizes:
        work = workload(n, args.pairs, seed=n)
        py = timed(_pykernel.peak_tables, work, args.lam, args.repeat)
        if _ckernel is None:
            print(f"{n:>6}{1e3 * py / args.pairs:>16.4f}{'-':>16}{'-':>9}")
            continue
        # same answers before comparing speed
        for qa, da, m in work[:20]:
            a = _pykernel.peak_tables(qa, da, m, math.sqrt(args.lam), args.lam, False)
            b = _ckernel.peak_tables(qa, da, m, math.sqrt(args.lam), args.lam, False)
            assert all(np.allclose(x, y, rtol=0, atol=1e-9) for x, y in zip(a, b))
        cy = timed(_ckernel.peak_tables, work, args.lam, args.repeat)
        print(f"{n:>6}{1e3 * py / args.pairs:>16.4f}{1e3 * cy / args.pairs:>16.4f}{py / cy:>8.1f}x")


if __name__ == "__main__":
    main()
