"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Both backends are imported side by side, so ADPRIOR_PURE_PYTHON does not
matter here. Without the compiled extension only the fallback is timed.
"""
from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from adprior.kernels import compiled_backend, python_backend


def _cases(rng: np.random.Generator):
    keys = [f"user_{i:06d}".encode() for i in range(20_000)]
    points = rng.normal(size=(10_000, 32))
    centroids = rng.normal(size=(256, 32))

    n_buckets, dim, n_ex = 4096, 16, 20_000
    user = rng.normal(0, 0.1, size=(n_buckets, dim))
    item = rng.normal(0, 0.1, size=(n_buckets, dim))
    u_ptr = np.arange(0, 4 * n_ex + 1, 4, dtype=np.int64)
    i_ptr = np.arange(0, 3 * n_ex + 1, 3, dtype=np.int64)
    u_idx = rng.integers(n_buckets, size=4 * n_ex).astype(np.int64)
    i_idx = rng.integers(n_buckets, size=3 * n_ex).astype(np.int64)
    labels = (rng.random(n_ex) < 0.2).astype(np.float64)
    weights = np.ones(n_ex)
    order = rng.permutation(n_ex).astype(np.int64)

    def sgd(backend):
        backend.sgd_epoch(user.copy(), item.copy(), u_idx, u_ptr, i_idx, i_ptr,
                          labels, weights, order, 0.05)

    return {
        "fnv1a64_batch 20k keys": lambda b: b.fnv1a64_batch(keys),
        "assign_nearest 10k x 256 x 32": lambda b: b.assign_nearest(points, centroids),
        "sgd_epoch 20k examples": sgd,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--json", help="write results here as well")
    args = parser.parse_args(argv)

    backends = {"python": python_backend}
    if compiled_backend is not None:
        backends["compiled"] = compiled_backend
    else:
        print("compiled extension not built; timing the fallback only", file=sys.stderr)

    results = []
    for name, fn in _cases(np.random.default_rng(args.seed)).items():
        row = {"kernel": name}
        for label, backend in backends.items():
            row[label] = min(timeit.repeat(lambda: fn(backend), number=1, repeat=args.repeat))
        if "compiled" in row:
            row["speedup"] = row["python"] / row["compiled"]
        results.append(row)

    print(f"{'kernel':34s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s}")
    for row in results:
        comp = f"{row['compiled']:11.4f}" if "compiled" in row else f"{'-':>11s}"
        speed = f"{row['speedup']:7.1f}x" if "speedup" in row else f"{'-':>8s}"
        print(f"{row['kernel']:34s} {row['python']:10.4f} {comp} {speed}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
