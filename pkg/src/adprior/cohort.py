"""User selection, next-advertiser labels and train/eval splitting."""
from __future__ import annotations

import datetime as dt
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

from .domain import HIGH_PRIORITY, AdvertiserRecord, Event, EventKind, Label
from .hashing import unit_interval
from .ingestion import DAY, Snapshot, anchor_cutoff, parse_date

TRAIN = "train"
EVAL = "eval"


@dataclass(frozen=True)
class CohortConfig:
    market_filter: str = "US"
    require_optin: bool = False
    conversion_lookback_days: int = 90
    label_window_days: int = 7
    min_sequence_length: int = 0
    split_fraction_train: float = 0.9
    split_seed: int = 0
    # "active user" is undefined upstream; any event in the lookback counts.
    min_active_events: int = 1

    def __post_init__(self):
        if not 0.0 < self.split_fraction_train < 1.0:
            raise ValueError("split_fraction_train must lie in (0, 1)")
        if self.conversion_lookback_days <= 0 or self.label_window_days <= 0:
            raise ValueError("lookback and label window must be positive")
        if self.min_sequence_length < 0:
            raise ValueError("min_sequence_length must be non-negative")

    @classmethod
    def v0(cls, **overrides) -> "CohortConfig":
        """Long-history experimental preset."""
        return cls(**{"min_sequence_length": 10, **overrides})

    @classmethod
    def v1(cls, **overrides) -> "CohortConfig":
        """Serving-traffic preset."""
        return cls(**{"min_sequence_length": 0, **overrides})


@dataclass(frozen=True)
class CohortExample:
    user_id: str
    anchor_date: dt.date
    label: Label
    split: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "user_id": self.user_id,
            "anchor_date": self.anchor_date.isoformat(),
            "label": self.label.to_dict(),
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CohortExample":
        return cls(
            user_id=data["user_id"],
            anchor_date=parse_date(data["anchor_date"]),
            label=Label.from_dict(data["label"]),
            split=data["split"],
        )


def label_window(anchor_date: dt.date, window_days: int) -> tuple[float, float]:
    """Half-open [start, end) covering days anchor+1 .. anchor+window_days."""
    start = anchor_cutoff(anchor_date)
    return start, start + window_days * DAY


def build_label(
    user_events_after_anchor: Iterable[Event],
    catalog: Mapping[str, AdvertiserRecord],
    config: CohortConfig,
    anchor_date: dt.date,
) -> Label | None:
    """Earliest high-priority conversion with an active advertiser inside the window."""
    start, end = label_window(anchor_date, config.label_window_days)
    best: Event | None = None
    for e in user_events_after_anchor:
        if not e.is_conversion or e.conversion_type != HIGH_PRIORITY:
            continue
        if not start <= e.timestamp < end:
            continue
        adv = catalog.get(e.advertiser_id)
        if adv is None or not adv.is_active:
            continue
        if best is None or e.timestamp < best.timestamp:
            best = e
    if best is None:
        return None
    return Label(best.user_id, best.advertiser_id, catalog[best.advertiser_id].name,
                 best.timestamp)


def split_user(user_id: str, config: CohortConfig) -> str:
    """Deterministic train/eval assignment from a seeded 64-bit FNV-1a hash."""
    u = unit_interval(user_id, config.split_seed)
    return TRAIN if u < config.split_fraction_train else EVAL


def _in_lookback(e: Event, cutoff: float, days: int) -> bool:
    return cutoff - e.timestamp <= days * DAY


def _passes_history(events: list[Event], snapshot: Snapshot, config: CohortConfig) -> bool:
    cutoff = snapshot.cutoff
    recent = [e for e in events if _in_lookback(e, cutoff, config.conversion_lookback_days)]
    if len(recent) < config.min_active_events:
        return False
    if not any(e.is_conversion for e in recent):
        return False
    if config.min_sequence_length:
        matched = sum(e.kind == EventKind.MATCHED_CONVERSION for e in events)
        attributed = sum(e.kind == EventKind.ATTRIBUTED_CONVERSION for e in events)
        if min(matched, attributed) < config.min_sequence_length:
            return False
    return True


def _passes_profile(user_id: str, snapshot: Snapshot, config: CohortConfig) -> bool:
    profile = snapshot.profiles.get(user_id)
    if profile is None:
        return not config.market_filter and not config.require_optin
    if config.market_filter and profile.market != config.market_filter:
        return False
    if config.require_optin and not profile.opt_in:
        return False
    return True


def _group_by_user(events: Iterable[Event]) -> dict[str, list[Event]]:
    grouped: dict[str, list[Event]] = defaultdict(list)
    for e in events:
        grouped[e.user_id].append(e)
    return grouped


def build_cohort(
    snapshot: Snapshot, future_events: Iterable[Event], config: CohortConfig
) -> list[CohortExample]:
    """Selected users with their labels and split, sorted by user id."""
    future = _group_by_user(future_events)
    out = []
    for user_id in snapshot.user_ids:
        if not _passes_profile(user_id, snapshot, config):
            continue
        if not _passes_history(snapshot.user_events(user_id), snapshot, config):
            continue
        label = build_label(future.get(user_id, ()), snapshot.catalog, config,
                            snapshot.anchor_date)
        if label is None:
            continue
        out.append(CohortExample(user_id, snapshot.anchor_date, label,
                                 split_user(user_id, config)))
    return out


def select_users(
    snapshot: Snapshot, future_events: Iterable[Event], config: CohortConfig
) -> list[str]:
    return [ex.user_id for ex in build_cohort(snapshot, future_events, config)]
