"""Advertiser-targeted candidate generation, two-tower scoring and blending."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .domain import AdvertiserRecord, Event, EventKind, Prediction
from .errors import NoPositivesError
from .hashing import bucket
from .kernels import sgd_epoch
from .parsing import normalize_name

LLM_CHANNEL = "llm_cg"


@dataclass(frozen=True)
class AdItem:
    item_id: str
    advertiser_id: str
    feature_tokens: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"item_id": self.item_id, "advertiser_id": self.advertiser_id,
                "feature_tokens": list(self.feature_tokens)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AdItem":
        return cls(data["item_id"], data["advertiser_id"], tuple(data.get("feature_tokens", ())))


class Objective(str, Enum):
    IMPRESSIONS_POSITIVE = "impressions_positive"
    CLICKS_DURATION_WEIGHTED = "clicks_duration_weighted"
    CONVERSIONS_POSITIVE = "conversions_positive"


def positive_weight(event: Event, objective: Objective) -> float | None:
    """Training weight of ``event`` as a positive, or None if it is not one."""
    if event.item_id is None:
        return None
    if objective is Objective.IMPRESSIONS_POSITIVE:
        return 1.0 if event.kind == EventKind.IMPRESSION else None
    if objective is Objective.CLICKS_DURATION_WEIGHTED:
        if event.kind != EventKind.CLICK:
            return None
        return math.log1p(event.dwell_seconds or 0.0)
    return 1.0 if event.is_conversion else None


@dataclass
class TwoTowerModel:
    dim: int
    hash_buckets: int
    seed: int
    user_table: np.ndarray
    item_table: np.ndarray
    tied: bool = False
    history: list[float] = field(default_factory=list)

    @classmethod
    def initialize(cls, dim: int = 16, hash_buckets: int = 4096, seed: int = 0,
                   scale: float = 0.1, tied: bool = False) -> "TwoTowerModel":
        if dim < 2:
            raise ValueError("dim must be >= 2")
        rng = np.random.default_rng(seed)
        user = rng.normal(0.0, scale, size=(hash_buckets, dim))
        item = user if tied else rng.normal(0.0, scale, size=(hash_buckets, dim))
        return cls(dim, hash_buckets, seed, user, item, tied)

    @classmethod
    def zeros(cls, dim: int = 16, hash_buckets: int = 4096, seed: int = 0,
              tied: bool = False) -> "TwoTowerModel":
        return cls.initialize(dim, hash_buckets, seed, scale=0.0, tied=tied)

    def buckets(self, tokens: Iterable[str]) -> list[int]:
        return [bucket(t, self.seed, self.hash_buckets) for t in tokens]

    def user_vector(self, tokens: Sequence[str]) -> np.ndarray:
        idx = self.buckets(tokens)
        return self.user_table[idx].mean(axis=0) if idx else np.zeros(self.dim)

    def item_vector(self, tokens: Sequence[str]) -> np.ndarray:
        idx = self.buckets(tokens)
        return self.item_table[idx].mean(axis=0) if idx else np.zeros(self.dim)

    def save(self, path: str | Path) -> None:
        np.savez(path, dim=self.dim, hash_buckets=self.hash_buckets, seed=self.seed,
                 tied=self.tied, user_table=self.user_table, item_table=self.item_table,
                 history=np.asarray(self.history))

    @classmethod
    def load(cls, path: str | Path) -> "TwoTowerModel":
        with np.load(path) as z:
            tied = bool(z["tied"])
            user = z["user_table"].copy()
            item = user if tied else z["item_table"].copy()
            return cls(int(z["dim"]), int(z["hash_buckets"]), int(z["seed"]), user, item,
                       tied, [float(v) for v in z["history"]])


def score(model: TwoTowerModel, user_features: Sequence[str], item: AdItem) -> float:
    return float(model.user_vector(user_features) @ model.item_vector(item.feature_tokens))


def user_feature_tokens(events: Iterable[Event], catalog: Mapping[str, AdvertiserRecord] | None = None,
                        limit: int = 64) -> list[str]:
    """Feature tokens describing a user's history, most recent first, de-duplicated."""
    out: list[str] = []
    seen = set()
    for e in sorted(events, key=lambda e: -e.timestamp):
        for token in (
            f"cat:{e.category}" if e.category else None,
            f"brand:{e.brand.strip().lower()}" if e.brand else None,
        ):
            if token and token not in seen:
                seen.add(token)
                out.append(token)
        if len(out) >= limit:
            break
    return out[:limit]


def _flatten(groups: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    ptr = np.zeros(len(groups) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(g) for g in groups])
    flat = np.fromiter((b for g in groups for b in g), dtype=np.int64, count=int(ptr[-1]))
    return flat, ptr


def collect_positives(events: Iterable[Event], objective: Objective) -> list[tuple[str, str, float]]:
    """(user_id, item_id, weight) for every event counted as a positive."""
    objective = Objective(objective)
    out = []
    for e in events:
        w = positive_weight(e, objective)
        if w is not None:
            out.append((e.user_id, e.item_id, w))
    return out


def train_two_tower(
    model: TwoTowerModel,
    events: Sequence[Event],
    items: Sequence[AdItem],
    objective: Objective | str,
    user_features: Mapping[str, Sequence[str]],
    *,
    epochs: int = 5,
    lr: float = 0.05,
    negatives_per_positive: int = 4,
    seed: int = 0,
) -> TwoTowerModel:
    """SGD on weighted logistic loss over positives and uniformly sampled negatives.

    Positives follow ``objective``; clicks under the duration-weighted
    objective carry weight ``log(1 + dwell_seconds)``, everything else 1.
    Negatives for a user are drawn from items that user never had as a
    positive. Mean loss per epoch is appended to ``model.history``.
    """
    objective = Objective(objective)
    positives = collect_positives(events, objective)
    item_by_id = {it.item_id: it for it in items}
    positives = [p for p in positives if p[1] in item_by_id]
    if not positives:
        raise NoPositivesError(f"no positives for objective {objective.value}")
    item_ids = [it.item_id for it in items]
    item_index = {iid: k for k, iid in enumerate(item_ids)}
    item_buckets = [model.buckets(it.feature_tokens) for it in items]
    user_pos: dict[str, set[int]] = defaultdict(set)
    for user, iid, _ in positives:
        user_pos[user].add(item_index[iid])
    user_buckets = {u: model.buckets(user_features.get(u, ())) for u in user_pos}

    rng = np.random.default_rng(seed)
    n_items = len(items)
    for _ in range(epochs):
        u_groups, i_groups, labels, weights = [], [], [], []
        for user, iid, w in positives:
            u_groups.append(user_buckets[user])
            i_groups.append(item_buckets[item_index[iid]])
            labels.append(1.0)
            weights.append(w)
            taken = user_pos[user]
            if len(taken) >= n_items:
                continue
            for _ in range(negatives_per_positive):
                j = int(rng.integers(n_items))
                while j in taken:
                    j = int(rng.integers(n_items))
                u_groups.append(user_buckets[user])
                i_groups.append(item_buckets[j])
                labels.append(0.0)
                weights.append(1.0)
        u_idx, u_ptr = _flatten(u_groups)
        i_idx, i_ptr = _flatten(i_groups)
        w_arr = np.asarray(weights, dtype=np.float64)
        order = rng.permutation(len(labels)).astype(np.int64)
        total = sgd_epoch(model.user_table, model.item_table, u_idx, u_ptr, i_idx, i_ptr,
                          np.asarray(labels, dtype=np.float64), w_arr, order, float(lr))
        model.history.append(total / max(w_arr.sum(), 1e-12))
    return model


def mean_loss(model: TwoTowerModel, examples: Sequence[tuple[Sequence[str], AdItem, float, float]]) -> float:
    """Weighted mean logistic loss of (user_tokens, item, label, weight) tuples."""
    total = wsum = 0.0
    for tokens, item, label, w in examples:
        s = score(model, tokens, item)
        z = -s if label > 0.5 else s
        total += w * (max(z, 0.0) + math.log1p(math.exp(-abs(z))))
        wsum += w
    return total / wsum if wsum else 0.0


def target_filter(
    prediction: Prediction,
    catalog: Iterable[AdvertiserRecord] | Mapping[str, AdvertiserRecord],
    items: Sequence[AdItem],
) -> list[AdItem]:
    """Items of the predicted advertisers, grouped in predicted-rank order."""
    if not prediction.ok:
        return []
    records = catalog.values() if isinstance(catalog, Mapping) else catalog
    ids_by_name: dict[str, list[str]] = defaultdict(list)
    for adv in records:
        ids_by_name[normalize_name(adv.name)].append(adv.advertiser_id)
    by_advertiser: dict[str, list[AdItem]] = defaultdict(list)
    for it in items:
        by_advertiser[it.advertiser_id].append(it)
    out: list[AdItem] = []
    seen: set[str] = set()
    for name in prediction.advertisers:
        for adv_id in ids_by_name.get(normalize_name(name), ()):
            if adv_id in seen:
                continue
            seen.add(adv_id)
            out.extend(by_advertiser.get(adv_id, ()))
    return out


def item_matrix(model: TwoTowerModel, items: Sequence[AdItem]) -> np.ndarray:
    if not items:
        return np.zeros((0, model.dim))
    return np.stack([model.item_vector(it.feature_tokens) for it in items])


def rank_channel(model: TwoTowerModel, user_features: Sequence[str],
                 candidates: Sequence[AdItem], vectors: np.ndarray | None = None,
                 limit: int | None = None) -> list[AdItem]:
    """Order candidates by two-tower score, ties by input position.

    ``vectors`` may carry precomputed item vectors aligned with ``candidates``.
    """
    if not candidates:
        return []
    if vectors is None:
        vectors = item_matrix(model, candidates)
    scores = vectors @ model.user_vector(user_features)
    order = np.argsort(-scores, kind="stable")
    if limit is not None:
        order = order[:limit]
    return [candidates[k] for k in order]


@dataclass(frozen=True)
class BlendConfig:
    l0_quota: int
    dedup_key: str = "item"
    llm_channel: str = LLM_CHANNEL

    def __post_init__(self):
        if self.l0_quota < 0:
            raise ValueError("l0_quota must be >= 0")
        if self.dedup_key not in ("item", "advertiser"):
            raise ValueError("dedup_key must be 'item' or 'advertiser'")


def blend(channels: Sequence[tuple[str, Sequence[AdItem]]], config: BlendConfig) -> list[AdItem]:
    """Round-robin interleave by per-channel rank with the LLM channel capped at its quota.

    Duplicates under ``config.dedup_key`` keep their earliest position.
    """
    lists = []
    for channel_id, ranked in channels:
        ranked = list(ranked)
        if channel_id == config.llm_channel:
            ranked = ranked[: config.l0_quota]
        lists.append(ranked)
    key = (lambda it: it.item_id) if config.dedup_key == "item" else (lambda it: it.advertiser_id)
    out: list[AdItem] = []
    seen = set()
    depth = max((len(r) for r in lists), default=0)
    for rank in range(depth):
        for ranked in lists:
            if rank < len(ranked):
                it = ranked[rank]
                k = key(it)
                if k not in seen:
                    seen.add(k)
                    out.append(it)
    return out


def diversity(result: Sequence[AdItem], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not result:
        return 1.0
    top = result[:k]
    return len({it.advertiser_id for it in top}) / min(k, len(result))
