"""Seeded synthetic worlds with planted user-to-advertiser affinities."""
from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import (
    HIGH_PRIORITY,
    LOW_PRIORITY,
    AdvertiserRecord,
    Event,
    EventKind,
    UserProfile,
)
from .ingestion import DAY, anchor_cutoff, write_catalog, write_events, write_jsonl, write_profiles
from .retrieval import AdItem

DEFAULT_ANCHOR = dt.date(2025, 6, 30)

CATEGORIES = (
    "home decor", "womens fashion", "beauty", "outdoor gear", "kitchen", "fitness",
    "toys", "pet supplies", "electronics", "jewelry", "garden", "baby",
)
_PREFIXES = (
    "Acorn", "Birch", "Cobalt", "Dune", "Ember", "Fable", "Grove", "Harbor", "Iris",
    "Juniper", "Kestrel", "Lumen", "Maple", "Nimbus", "Orchid", "Pebble", "Quill",
    "Rowan", "Sable", "Tidal", "Umber", "Vale", "Willow", "Yarrow", "Zephyr", "Aster",
)
_SUFFIXES = ("Goods", "Supply", "Studio", "Market", "House", "Co", "Outfitters",
             "Works", "Collective", "Labs")
_QUERY_WORDS = ("ideas", "sale", "best", "gift", "cheap", "luxury", "diy", "trending",
                "new", "minimal")


@dataclass
class World:
    anchor_date: dt.date
    events: list[Event]
    catalog: list[AdvertiserRecord]
    profiles: list[UserProfile]
    items: list[AdItem]
    planted_truth: dict[str, str]  # user_id -> advertiser_id

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_events(self.events, directory / "events.jsonl")
        write_catalog(self.catalog, directory / "catalog.jsonl")
        write_profiles(self.profiles, directory / "profiles.jsonl")
        write_jsonl((it.to_dict() for it in self.items), directory / "items.jsonl")
        names = {a.advertiser_id: a.name for a in self.catalog}
        write_jsonl(({"user_id": u, "advertiser_id": a, "advertiser_name": names[a]}
                     for u, a in sorted(self.planted_truth.items())),
                    directory / "planted_truth.jsonl")
        (directory / "world.json").write_text(
            json.dumps({"anchor_date": self.anchor_date.isoformat()}) + "\n")


def _name(i: int) -> str:
    base = f"{_PREFIXES[i % len(_PREFIXES)]} {_SUFFIXES[(i // len(_PREFIXES)) % len(_SUFFIXES)]}"
    lap = i // (len(_PREFIXES) * len(_SUFFIXES))
    return base if lap == 0 else f"{base} {lap + 1}"


def _slug(name: str) -> str:
    return "".join(ch for ch in name.lower() if ch.isalnum())


def generate_world(
    n_users: int,
    n_advertisers: int,
    n_items: int,
    days: int,
    seed: int,
    affinity_strength: float,
    anchor_date: dt.date = DEFAULT_ANCHOR,
    label_window_days: int = 7,
) -> World:
    """Generate events, catalog, profiles and items around ``anchor_date``.

    Each user has one planted advertiser. History conversions, searches,
    URLs and clicks favor it with probability ``affinity_strength``, and the
    first future conversion is with it at that same probability (always when
    the strength is 1).
    """
    if min(n_users, n_advertisers, n_items, days) < 1:
        raise ValueError("counts must be >= 1")
    if not 0.0 <= affinity_strength <= 1.0:
        raise ValueError("affinity_strength must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    a = affinity_strength
    cutoff = anchor_cutoff(anchor_date)

    catalog = []
    category_of = {}
    for i in range(n_advertisers):
        adv_id = f"adv_{i:04d}"
        objective = ("OCPM", "ROAS", "other")[int(rng.choice(3, p=[0.45, 0.35, 0.2]))]
        catalog.append(AdvertiserRecord(
            advertiser_id=adv_id,
            name=_name(i),
            active_on_platform=bool(rng.random() < 0.93),
            active_spend=bool(rng.random() < 0.9),
            market="US" if rng.random() < 0.9 else "CA",
            shopping=bool(rng.random() < 0.85),
            objective=objective,
            daily_revenue=round(float(rng.lognormal(8.0, 1.0)), 2),
        ))
        category_of[adv_id] = CATEGORIES[int(rng.integers(len(CATEGORIES)))]
    by_id = {adv.advertiser_id: adv for adv in catalog}
    active_ids = [adv.advertiser_id for adv in catalog if adv.is_active]
    if not active_ids:
        active_ids = [catalog[0].advertiser_id]

    items = []
    items_of: dict[str, list[str]] = {adv.advertiser_id: [] for adv in catalog}
    for j in range(n_items):
        adv = catalog[j % n_advertisers] if j < n_advertisers else catalog[
            int(rng.integers(n_advertisers))]
        item_id = f"item_{j:05d}"
        word = _QUERY_WORDS[int(rng.integers(len(_QUERY_WORDS)))]
        items.append(AdItem(item_id, adv.advertiser_id, (
            f"cat:{category_of[adv.advertiser_id]}", f"brand:{_slug(adv.name)}", f"kw:{word}")))
        items_of[adv.advertiser_id].append(item_id)

    def ts_at_age(age_days: float) -> int:
        # negative ages are future events; non-negative ones stay before the cutoff
        ts = int(cutoff - age_days * DAY)
        return ts - 1 if age_days >= 0 and ts >= cutoff else ts

    def pick(preferred: str, others: list[str]) -> str:
        if rng.random() < a:
            return preferred
        return others[int(rng.integers(len(others)))]

    events: list[Event] = []
    profiles = []
    planted = {}
    all_ids = [adv.advertiser_id for adv in catalog]
    for u in range(n_users):
        user_id = f"user_{u:05d}"
        profiles.append(UserProfile(
            user_id=user_id,
            age=int(rng.integers(18, 71)),
            gender=("female", "male", "unknown")[int(rng.integers(3))],
            user_state=("core", "casual", "resurrected", "new")[int(rng.integers(4))],
            market="US" if rng.random() < 0.92 else "CA",
            opt_in=bool(rng.random() < 0.7),
        ))
        preferred = active_ids[int(rng.integers(len(active_ids)))]
        planted[user_id] = preferred
        secondary = [all_ids[int(rng.integers(n_advertisers))] for _ in range(3)]
        noise = secondary + all_ids

        def add(kind, age, **kw):
            events.append(Event(user_id, ts_at_age(age), kind, **kw))

        # about 5% of users have no conversion inside a 90-day lookback
        stale = rng.random() < 0.05
        for _ in range(1 + int(rng.poisson(4))):
            adv = pick(preferred, noise)
            age = float(rng.uniform(91, max(days, 92))) if stale else float(rng.uniform(0, min(days, 90)))
            kind = (EventKind.ATTRIBUTED_CONVERSION, EventKind.MATCHED_CONVERSION,
                    EventKind.CONVERSION)[int(rng.choice(3, p=[0.4, 0.4, 0.2]))]
            item = items_of[adv][int(rng.integers(len(items_of[adv])))] if items_of[adv] else None
            add(kind, age, advertiser_id=adv, category=category_of[adv],
                conversion_type=HIGH_PRIORITY if rng.random() < 0.85 else LOW_PRIORITY,
                item_id=item)
        for kind, lo, hi in ((EventKind.ONSITE_SEARCH, 3, 15), (EventKind.OFFSITE_SEARCH, 0, 6)):
            for _ in range(int(rng.integers(lo, hi + 1))):
                adv = pick(preferred, noise)
                word = _QUERY_WORDS[int(rng.integers(len(_QUERY_WORDS)))]
                add(kind, float(rng.uniform(0, days)), query=f"{category_of[adv]} {word}",
                    category=category_of[adv])
        for _ in range(int(rng.integers(0, 9))):
            adv = pick(preferred, noise)
            add(EventKind.OFFSITE_URL, float(rng.uniform(0, min(days, 30))),
                url=f"https://www.{_slug(by_id[adv].name)}.com/p/{int(rng.integers(1000))}",
                category=category_of[adv])
        for _ in range(int(rng.integers(5, 21))):
            adv = all_ids[int(rng.integers(n_advertisers))] if rng.random() < 0.5 else pick(
                preferred, noise)
            if items_of[adv]:
                add(EventKind.IMPRESSION, float(rng.uniform(0, days)), advertiser_id=adv,
                    item_id=items_of[adv][int(rng.integers(len(items_of[adv])))],
                    category=category_of[adv], brand=_slug(by_id[adv].name))
        for _ in range(int(rng.integers(1, 7))):
            adv = pick(preferred, noise)
            if items_of[adv]:
                add(EventKind.CLICK, float(rng.uniform(0, days)), advertiser_id=adv,
                    item_id=items_of[adv][int(rng.integers(len(items_of[adv])))],
                    category=category_of[adv], brand=_slug(by_id[adv].name),
                    dwell_seconds=round(float(rng.exponential(30.0)), 1))

        # future activity: label material plus ordinary behavior
        if rng.random() < 0.9:
            day = float(rng.uniform(0, label_window_days))
            if rng.random() < 0.2:
                adv = all_ids[int(rng.integers(n_advertisers))]
                add(EventKind.ATTRIBUTED_CONVERSION, -day * 0.5, advertiser_id=adv,
                    category=category_of[adv], conversion_type=LOW_PRIORITY)
            if rng.random() < a:
                label_adv = preferred
            else:
                pool = [x for x in active_ids if x != preferred] or active_ids
                label_adv = pool[int(rng.integers(len(pool)))]
            add(EventKind.MATCHED_CONVERSION, -day, advertiser_id=label_adv,
                category=category_of[label_adv], conversion_type=HIGH_PRIORITY)
            for _ in range(int(rng.integers(0, 3))):
                later = float(rng.uniform(day + 0.05, label_window_days + 3))
                adv = all_ids[int(rng.integers(n_advertisers))]
                add(EventKind.CONVERSION, -later, advertiser_id=adv,
                    category=category_of[adv], conversion_type=HIGH_PRIORITY)
        for _ in range(int(rng.integers(0, 4))):
            adv = pick(preferred, noise)
            add(EventKind.ONSITE_SEARCH, -float(rng.uniform(0, label_window_days)),
                query=f"{category_of[adv]} upcoming", category=category_of[adv])

    events.sort(key=lambda e: (e.timestamp, e.user_id))
    return World(anchor_date, events, catalog, profiles, items, planted)
