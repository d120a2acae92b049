"""Time the compiled clustering kernels against the numpy fallback.

Usage::

    python3 bench/benchmark.py [--sizes 1000,2000,4000] [--dim 128] [--workers 1] [--repeats 3]

For each corpus size it times the distance matrix and the merge loop of
every available backend, and checks that the two backends agree: distance
matrices to within 1e-9, merge sequences bitwise when fed the same matrix.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from erskit import _backend
from erskit.embedding import normalize_rows


def corpus(n: int, d: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    centers = normalize_rows(rng.standard_normal((max(1, n // 10), d)))
    owner = rng.integers(0, len(centers), n)
    return normalize_rows(centers[owner] + 0.6 * rng.standard_normal((n, d)) / np.sqrt(d))


def best_of(fn, repeats: int) -> tuple[float, object]:
    best, out = np.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="1000,2000,4000")
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--linkage", choices=sorted(_backend.LINKAGES), default="average")
    args = p.parse_args(argv)

    backends = _backend.available_backends()
    code = _backend.LINKAGES[args.linkage]
    print(f"backends: {', '.join(backends)} (active: {_backend.BACKEND}); d={args.dim}, workers={args.workers}")
    print(f"{'n':>6} {'backend':>8} {'distances s':>12} {'merge s':>9} {'total s':>9}")
    all_ok = True
    for n in (int(x) for x in args.sizes.split(",")):
        X = corpus(n, args.dim)
        D, merges, totals = {}, {}, {}
        for name in backends:
            k = _backend.get(name)
            t_d, D[name] = best_of(lambda: k.pairwise_chordal(X, args.workers), args.repeats)
            t_m, merges[name] = best_of(lambda: k.hac_merge(D[name].copy(), 1.0, code), args.repeats)
            totals[name] = t_d + t_m
            print(f"{n:>6} {name:>8} {t_d:>12.4f} {t_m:>9.4f} {t_d + t_m:>9.4f}")
        if len(backends) == 2:
            gap = float(np.max(np.abs(D["cython"] - D["python"])))
            ref = D["python"]
            same = all(
                np.array_equal(a, b)
                for a, b in zip(_backend.get("cython").hac_merge(ref.copy(), 1.0, code), merges["python"])
            )
            ok = gap <= 1e-9 and same
            all_ok &= ok
            print(f"{'':>6} speedup {totals['python'] / totals['cython']:.1f}x; max |dD| {gap:.1e}; "
                  f"merges identical: {same}")
        del D, merges
    return 0 if all_ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
