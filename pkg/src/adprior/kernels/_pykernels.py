"""Pure-Python/numpy implementations of the hot kernels.

Numerically these follow the compiled versions operation for operation
where that is cheap to guarantee (hashing, nearest-centroid distances).
The SGD epoch pools with numpy, so it agrees with the compiled kernel to
rounding only.
"""
from __future__ import annotations

import math

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def fnv1a64_batch(items) -> list[int]:
    return [fnv1a64(b) for b in items]


def assign_nearest(points: np.ndarray, centroids: np.ndarray, chunk: int = 4096):
    """Nearest centroid per row by squared Euclidean distance.

    Distances accumulate dimension by dimension, like the compiled loop, so
    both backends break ties identically (lowest index wins).
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    centroids = np.ascontiguousarray(centroids, dtype=np.float64)
    n, d = points.shape
    codes = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk):
        block = points[start:start + chunk]
        acc = np.zeros((block.shape[0], centroids.shape[0]))
        for j in range(d):
            diff = block[:, j, None] - centroids[None, :, j]
            acc += diff * diff
        idx = acc.argmin(axis=1)
        codes[start:start + chunk] = idx
        best[start:start + chunk] = acc[np.arange(block.shape[0]), idx]
    return codes, best


def _softplus(x: float) -> float:
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def sgd_epoch(user_table, item_table, u_idx, u_ptr, i_idx, i_ptr,
              labels, weights, order, lr: float) -> float:
    total = 0.0
    for ex in order:
        ub = u_idx[u_ptr[ex]:u_ptr[ex + 1]]
        ib = i_idx[i_ptr[ex]:i_ptr[ex + 1]]
        if len(ub) == 0 or len(ib) == 0:
            continue
        u = user_table[ub].mean(axis=0)
        v = item_table[ib].mean(axis=0)
        s = float(u @ v)
        y = labels[ex]
        w = weights[ex]
        total += w * (_softplus(-s) if y > 0.5 else _softplus(s))
        g = w * (_sigmoid(s) - y)
        if g == 0.0:
            continue
        gu = (lr * g / len(ub)) * v
        gv = (lr * g / len(ib)) * u
        np.subtract.at(user_table, ub, gu)
        np.subtract.at(item_table, ib, gv)
    return total
