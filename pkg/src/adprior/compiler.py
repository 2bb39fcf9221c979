"""Compile a snapshot into the per-user structured context used by prompts."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, replace
from typing import Any, Iterable, Mapping, Sequence
from urllib.parse import urlsplit

from .domain import AdvertiserRecord, Event, EventKind, UserProfile
from .errors import UnknownUserError
from .ingestion import DAY, Snapshot

# Small public-suffix table; multi-label suffixes must be listed explicitly.
PUBLIC_SUFFIXES = frozenset({
    "com", "net", "org", "io", "co", "us", "uk", "ca", "de", "fr", "it", "es",
    "nl", "jp", "au", "in", "br", "mx", "shop", "store", "biz", "info", "eu",
    "co.uk", "org.uk", "ac.uk", "com.au", "net.au", "co.jp", "co.nz", "com.br",
    "com.mx", "co.in", "co.kr", "com.cn",
})
SHOP_SUBDOMAINS = frozenset({"www", "shop", "store", "m", "buy", "us", "en", "checkout"})

SEQUENCE_FIELDS = (
    "attributed_conversions",
    "matched_conversions",
    "onsite_searches",
    "offsite_searches",
    "offsite_urls",
)


@dataclass(frozen=True)
class CompileConfig:
    onsite_search_window_days: int = 90
    offsite_url_window_days: int = 14
    # conversions and offsite searches share the conversion lookback
    behavior_window_days: int = 90
    max_items_per_sequence: int = 30
    top_k_categories: int = 5
    top_k_brands: int = 5
    preset_pool_size: int = 50
    include_sids: bool = False
    sid_window_items: int = 20
    half_life_days: float = 30.0

    def __post_init__(self):
        for name in ("onsite_search_window_days", "offsite_url_window_days",
                     "behavior_window_days", "max_items_per_sequence", "top_k_categories",
                     "top_k_brands", "preset_pool_size", "sid_window_items"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.half_life_days <= 0:
            raise ValueError("half_life_days must be positive")

    def window_for(self, kind: EventKind) -> int:
        if kind == EventKind.ONSITE_SEARCH:
            return self.onsite_search_window_days
        if kind == EventKind.OFFSITE_URL:
            return self.offsite_url_window_days
        return self.behavior_window_days


@dataclass(frozen=True)
class UserContext:
    user_id: str
    profile: UserProfile
    past_conversion_advertisers: tuple[str, ...] = ()
    preset_pool: tuple[str, ...] = ()
    attributed_conversions: tuple[str, ...] = ()
    matched_conversions: tuple[str, ...] = ()
    onsite_searches: tuple[str, ...] = ()
    offsite_searches: tuple[str, ...] = ()
    offsite_urls: tuple[str, ...] = ()
    top_categories: tuple[str, ...] = ()
    top_brands: tuple[str, ...] = ()
    sid_sequences: tuple[str, ...] | None = None

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "UserContext":
        kwargs = dict(data)
        kwargs["profile"] = UserProfile.from_dict(data["profile"])
        for key, value in kwargs.items():
            if isinstance(value, list):
                kwargs[key] = tuple(value)
        return cls(**kwargs)

    def with_fields(self, **changes) -> "UserContext":
        return replace(self, **changes)


def extract_brand(url: str) -> str | None:
    """Registrable-domain label of a URL's host, e.g. ``shop.brandco.co.uk`` -> ``brandco``."""
    try:
        parts = urlsplit(url.strip())
        host = parts.hostname
    except ValueError:
        return None
    if parts.scheme not in ("http", "https") or not host:
        return None
    labels = [x for x in host.lower().rstrip(".").split(".") if x]
    if len(labels) < 2 or any(not x.replace("-", "").isalnum() for x in labels):
        return None
    while labels and labels[0] in SHOP_SUBDOMAINS and len(labels) > 2:
        labels = labels[1:]
    for n_suffix in (2, 1):
        if len(labels) > n_suffix and ".".join(labels[-n_suffix:]) in PUBLIC_SUFFIXES:
            return labels[-n_suffix - 1]
    return None


def _age_days(e: Event, now: float) -> float:
    return (now - e.timestamp) / DAY


def _rank_weighted(counts: Mapping[str, float], k: int) -> list[tuple[str, float]]:
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


def derive_top_categories(
    events_in_scope: Iterable[Event], k: int, *, now: float, half_life_days: float = 30.0
) -> list[tuple[str, float]]:
    """Categories ranked by recency-weighted frequency, weight ``exp(-age_days / half_life)``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores: dict[str, float] = defaultdict(float)
    for e in events_in_scope:
        if e.category:
            scores[e.category] += math.exp(-_age_days(e, now) / half_life_days)
    return _rank_weighted(scores, k)


def derive_top_brands(
    events_in_scope: Iterable[Event], k: int, *, now: float, half_life_days: float = 30.0
) -> list[tuple[str, float]]:
    """Like :func:`derive_top_categories` over event brands plus brands parsed from URLs."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores: dict[str, float] = defaultdict(float)
    for e in events_in_scope:
        w = math.exp(-_age_days(e, now) / half_life_days)
        if e.brand and e.brand.strip():
            scores[e.brand.strip().lower()] += w
        if e.url:
            from_url = extract_brand(e.url)
            if from_url:
                scores[from_url] += w
    return _rank_weighted(scores, k)


def build_preset_pool(catalog: Iterable[AdvertiserRecord], size: int) -> list[str]:
    """Top-revenue active US shopping advertisers on OCPM/ROAS objectives."""
    if size < 1:
        raise ValueError("size must be >= 1")
    eligible = [
        a for a in catalog
        if a.market == "US" and a.shopping and a.objective in ("OCPM", "ROAS") and a.is_active
    ]
    eligible.sort(key=lambda a: (-a.daily_revenue, a.name))
    return [a.name for a in eligible[:size]]


def _recent_sequence(events: list[Event], text_of, cap: int) -> tuple[str, ...]:
    # events arrive most-recent-first; consecutive repeats keep the newest copy
    out: list[str] = []
    for e in events:
        text = text_of(e)
        if not text:
            continue
        if out and out[-1] == text:
            continue
        out.append(text)
        if len(out) == cap:
            break
    return tuple(out)


def _recency_key(e: Event):
    return (-e.timestamp, e.kind.value, e.advertiser_id or "", e.query or "", e.url or "",
            e.item_id or "", e.category or "", e.brand or "")


def compile_context(
    snapshot: Snapshot,
    user_id: str,
    config: CompileConfig,
    *,
    preset_pool: Sequence[str] | None = None,
    item_sids: Mapping[str, str] | None = None,
) -> UserContext:
    """Build the structured, windowed, most-recent-first context for one user.

    ``item_sids`` maps item ids to formatted SID strings; it is used only when
    ``config.include_sids`` is set.
    """
    if not snapshot.has_user(user_id):
        raise UnknownUserError(user_id)
    now = snapshot.cutoff
    catalog = snapshot.catalog
    events = sorted(snapshot.user_events(user_id), key=_recency_key)
    in_window = [e for e in events if _age_days(e, now) <= config.window_for(e.kind)]
    by_kind: dict[EventKind, list[Event]] = defaultdict(list)
    for e in in_window:
        by_kind[e.kind].append(e)

    def adv_name(e: Event) -> str:
        adv = catalog.get(e.advertiser_id or "")
        return adv.name if adv is not None else (e.advertiser_id or "")

    cap = config.max_items_per_sequence
    weights: dict[str, float] = defaultdict(float)
    latest: dict[str, float] = {}
    for e in in_window:
        if not e.is_conversion:
            continue
        adv = catalog.get(e.advertiser_id or "")
        if adv is None or not adv.is_active:
            continue
        weights[adv.name] += math.exp(-_age_days(e, now) / config.half_life_days)
        latest[adv.name] = max(latest.get(adv.name, -math.inf), e.timestamp)
    past_advertisers = sorted(weights, key=lambda n: (-weights[n], -latest[n], n))[:cap]

    category_sources = (EventKind.ATTRIBUTED_CONVERSION, EventKind.MATCHED_CONVERSION,
                        EventKind.ONSITE_SEARCH, EventKind.OFFSITE_SEARCH)
    categories = derive_top_categories(
        [e for e in in_window if e.kind in category_sources], config.top_k_categories,
        now=now, half_life_days=config.half_life_days)
    brands = derive_top_brands(
        in_window, config.top_k_brands, now=now, half_life_days=config.half_life_days)

    if preset_pool is None:
        preset_pool = build_preset_pool(catalog.values(), config.preset_pool_size)

    sid_sequences = None
    if config.include_sids:
        sids: list[str] = []
        for e in events:
            if e.item_id and item_sids and e.item_id in item_sids:
                sids.append(item_sids[e.item_id])
                if len(sids) == config.sid_window_items:
                    break
        sid_sequences = tuple(sids)

    profile = snapshot.profiles.get(user_id) or UserProfile(user_id)
    return UserContext(
        user_id=user_id,
        profile=profile,
        past_conversion_advertisers=tuple(past_advertisers),
        preset_pool=tuple(preset_pool[: config.preset_pool_size]),
        attributed_conversions=_recent_sequence(
            by_kind[EventKind.ATTRIBUTED_CONVERSION], adv_name, cap),
        matched_conversions=_recent_sequence(
            by_kind[EventKind.MATCHED_CONVERSION], adv_name, cap),
        onsite_searches=_recent_sequence(
            by_kind[EventKind.ONSITE_SEARCH], lambda e: e.query, cap),
        offsite_searches=_recent_sequence(
            by_kind[EventKind.OFFSITE_SEARCH], lambda e: e.query, cap),
        offsite_urls=_recent_sequence(by_kind[EventKind.OFFSITE_URL], lambda e: e.url, cap),
        top_categories=tuple(c for c, _ in categories),
        top_brands=tuple(b for b, _ in brands),
        sid_sequences=sid_sequences,
    )
