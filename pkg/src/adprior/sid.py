"""Semantic IDs via multi-level residual k-means.

Level 0 is a plain k-means codebook. Every deeper level reserves code 0 for
the zero vector, so a greedy encoder can always decline to move the
reconstruction and the residual error never grows with depth.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CodeOutOfRangeError, DimensionMismatchError, InsufficientDataError
from .kernels import assign_nearest

PRODUCTION_CODES_PER_LEVEL = 20248  # catalog-scale setting; too slow for desk-size runs
DEFAULT_LEVELS = 5
DEFAULT_CODES_PER_LEVEL = 256

_SID_TOKEN = re.compile(r"<sid_l(\d+)_(\d+)>")


@dataclass(frozen=True)
class Sid:
    codes: tuple[int, ...]


@dataclass
class SidCodebook:
    levels: int
    codes_per_level: int
    dim: int
    centroids: list[np.ndarray]  # one (codes_per_level, dim) array per level

    def __post_init__(self):
        if self.levels < 1 or self.codes_per_level < 2:
            raise ValueError("need levels >= 1 and codes_per_level >= 2")
        if len(self.centroids) != self.levels:
            raise ValueError("one centroid table per level required")
        for table in self.centroids:
            if table.shape != (self.codes_per_level, self.dim):
                raise DimensionMismatchError(f"centroid table has shape {table.shape}")
            if not np.all(np.isfinite(table)):
                raise ValueError("centroids must be finite")

    def to_dict(self) -> dict:
        return {
            "levels": self.levels,
            "codes_per_level": self.codes_per_level,
            "dim": self.dim,
            "centroids": [t.tolist() for t in self.centroids],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SidCodebook":
        return cls(data["levels"], data["codes_per_level"], data["dim"],
                   [np.asarray(t, dtype=np.float64) for t in data["centroids"]])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "SidCodebook":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _canonical_order(x: np.ndarray) -> np.ndarray:
    # row order must not influence training
    return x[np.lexsort(x.T[::-1])]


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator,
              fixed: np.ndarray | None) -> np.ndarray:
    n = points.shape[0]
    chosen = [] if fixed is None else [fixed]
    if fixed is None:
        chosen.append(points[rng.integers(n)])
    d2 = assign_nearest(points, np.stack(chosen))[1]
    while len(chosen) < k:
        total = d2.sum()
        if total <= 0:
            # every point coincides with a chosen centroid; duplicates are harmless
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        chosen.append(points[idx])
        d2 = np.minimum(d2, assign_nearest(points, points[idx][None, :])[1])
    return np.stack(chosen)


def _lloyd(points: np.ndarray, centroids: np.ndarray, first_free: int,
           max_iters: int, tol: float) -> np.ndarray:
    k = centroids.shape[0]
    for _ in range(max_iters):
        codes, _ = assign_nearest(points, centroids)
        sums = np.zeros_like(centroids)
        np.add.at(sums, codes, points)
        counts = np.bincount(codes, minlength=k).astype(np.float64)
        updated = centroids.copy()
        live = counts > 0
        live[:first_free] = False
        updated[live] = sums[live] / counts[live, None]
        shift = float(np.max(np.linalg.norm(updated - centroids, axis=1)))
        centroids = updated
        if shift < tol:
            break
    return centroids


def train_codebook(
    embeddings,
    levels: int = DEFAULT_LEVELS,
    codes_per_level: int = DEFAULT_CODES_PER_LEVEL,
    seed: int = 0,
    max_iters: int = 25,
    tol: float = 1e-6,
) -> SidCodebook:
    try:
        x = np.asarray(embeddings, dtype=np.float64)
    except ValueError:
        raise DimensionMismatchError("embeddings have inconsistent dimensions") from None
    if x.ndim != 2:
        raise DimensionMismatchError("embeddings must be a list of equal-length vectors")
    if levels < 1 or codes_per_level < 2:
        raise ValueError("need levels >= 1 and codes_per_level >= 2")
    if np.unique(x, axis=0).shape[0] < codes_per_level:
        raise InsufficientDataError(
            f"need at least {codes_per_level} distinct embeddings, got "
            f"{np.unique(x, axis=0).shape[0]}")
    rng = np.random.default_rng(seed)
    residual = _canonical_order(x)
    tables = []
    for level in range(levels):
        zero = None if level == 0 else np.zeros(x.shape[1])
        init = _kmeanspp(residual, codes_per_level, rng, zero)
        table = _lloyd(residual, init, 0 if level == 0 else 1, max_iters, tol)
        codes, _ = assign_nearest(residual, table)
        residual = residual - table[codes]
        tables.append(table)
    return SidCodebook(levels, codes_per_level, x.shape[1], tables)


def _check_dim(codebook: SidCodebook, x: np.ndarray) -> None:
    if x.shape[-1] != codebook.dim:
        raise DimensionMismatchError(f"expected dim {codebook.dim}, got {x.shape[-1]}")


def encode_batch(codebook: SidCodebook, embeddings) -> tuple[np.ndarray, np.ndarray]:
    """Greedy residual codes, shape (n, levels), plus squared residual error per level."""
    residual = np.array(embeddings, dtype=np.float64, ndmin=2)
    _check_dim(codebook, residual)
    n = residual.shape[0]
    codes = np.empty((n, codebook.levels), dtype=np.int64)
    errors = np.empty((n, codebook.levels))
    for level, table in enumerate(codebook.centroids):
        idx, dist = assign_nearest(residual, table)
        codes[:, level] = idx
        errors[:, level] = dist
        residual = residual - table[idx]
    return codes, errors


def encode(codebook: SidCodebook, embedding) -> Sid:
    x = np.asarray(embedding, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError("encode takes a single vector")
    codes, _ = encode_batch(codebook, x[None, :])
    return Sid(tuple(int(c) for c in codes[0]))


def decode(codebook: SidCodebook, sid: Sid) -> np.ndarray:
    if len(sid.codes) != codebook.levels:
        raise CodeOutOfRangeError(f"SID has {len(sid.codes)} levels, codebook {codebook.levels}")
    out = np.zeros(codebook.dim)
    for level, code in enumerate(sid.codes):
        if not 0 <= code < codebook.codes_per_level:
            raise CodeOutOfRangeError(f"code {code} at level {level}")
        out = out + codebook.centroids[level][code]
    return out


def format_sid(sid: Sid) -> str:
    return "".join(f"<sid_l{level}_{code}>" for level, code in enumerate(sid.codes))


def format_sid_sequence(sids: Sequence[Sid]) -> str:
    return ", ".join(format_sid(s) for s in sids)


def parse_sid_sequence(text: str) -> list[Sid]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        tokens = _SID_TOKEN.findall(item)
        if "".join(f"<sid_l{a}_{b}>" for a, b in tokens) != item:
            raise ValueError(f"unparseable SID {item!r}")
        levels = [int(a) for a, _ in tokens]
        if levels != list(range(len(levels))):
            raise ValueError(f"SID levels out of order in {item!r}")
        out.append(Sid(tuple(int(b) for _, b in tokens)))
    return out
