"""Shared record types: events, advertisers, profiles, labels, predictions."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import Any


class EventKind(str, Enum):
    ONSITE_SEARCH = "onsite_search"
    OFFSITE_SEARCH = "offsite_search"
    OFFSITE_URL = "offsite_url"
    ATTRIBUTED_CONVERSION = "attributed_conversion"
    MATCHED_CONVERSION = "matched_conversion"
    IMPRESSION = "impression"
    CLICK = "click"
    CONVERSION = "conversion"


CONVERSION_KINDS = frozenset(
    {EventKind.ATTRIBUTED_CONVERSION, EventKind.MATCHED_CONVERSION, EventKind.CONVERSION}
)

HIGH_PRIORITY = "high_priority"
LOW_PRIORITY = "low_priority"
CONVERSION_TYPES = frozenset({HIGH_PRIORITY, LOW_PRIORITY})

OBJECTIVES = frozenset({"OCPM", "ROAS", "other"})


@dataclass(frozen=True)
class Event:
    user_id: str
    timestamp: float
    kind: EventKind
    advertiser_id: str | None = None
    query: str | None = None
    url: str | None = None
    category: str | None = None
    brand: str | None = None
    dwell_seconds: float | None = None
    conversion_type: str | None = None
    item_id: str | None = None

    @property
    def is_conversion(self) -> bool:
        return self.kind in CONVERSION_KINDS

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            out[f.name] = value.value if isinstance(value, EventKind) else value
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Event":
        for key in ("kind", "user_id", "timestamp"):
            if key not in data:
                raise KeyError(key)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown field(s): {', '.join(sorted(unknown))}")
        kwargs = dict(data)
        kwargs["kind"] = EventKind(data["kind"])
        return cls(**kwargs)


def validate_event(e: Event) -> list[str]:
    """Return every invariant the event violates; an empty list means valid."""
    problems = []
    if not isinstance(e.kind, EventKind):
        try:
            EventKind(e.kind)
        except ValueError:
            problems.append(f"unknown kind {e.kind!r}")
    if not e.user_id:
        problems.append("missing user_id")
    ts = e.timestamp
    if isinstance(ts, bool) or not isinstance(ts, (int, float)) or not math.isfinite(ts):
        problems.append("non-finite timestamp")
    elif ts < 0:
        problems.append("negative timestamp")
    if e.kind in CONVERSION_KINDS:
        if not e.advertiser_id:
            problems.append("missing advertiser_id")
        if e.conversion_type is None:
            problems.append("missing conversion_type")
    if e.conversion_type is not None and e.conversion_type not in CONVERSION_TYPES:
        problems.append(f"unknown conversion_type {e.conversion_type!r}")
    if e.kind == EventKind.CLICK:
        if e.dwell_seconds is None:
            problems.append("missing dwell_seconds")
        elif not math.isfinite(e.dwell_seconds) or e.dwell_seconds < 0:
            problems.append("negative dwell_seconds")
    elif e.dwell_seconds is not None and e.dwell_seconds < 0:
        problems.append("negative dwell_seconds")
    return problems


@dataclass(frozen=True)
class AdvertiserRecord:
    advertiser_id: str
    name: str
    active_on_platform: bool
    active_spend: bool
    market: str
    shopping: bool
    objective: str
    daily_revenue: float

    def __post_init__(self):
        if not self.name:
            raise ValueError(f"advertiser {self.advertiser_id} has an empty name")
        if self.daily_revenue < 0:
            raise ValueError(f"advertiser {self.advertiser_id} has negative revenue")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")

    @property
    def is_active(self) -> bool:
        return self.active_on_platform and self.active_spend

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AdvertiserRecord":
        return cls(**data)


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    age: int | None = None
    gender: str | None = None
    user_state: str = ""
    market: str = "US"
    opt_in: bool = True

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "UserProfile":
        return cls(**data)


@dataclass(frozen=True)
class Label:
    user_id: str
    advertiser_id: str
    advertiser_name: str
    conversion_timestamp: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Label":
        return cls(**data)


OK = "ok"
MALFORMED = "malformed"


@dataclass(frozen=True)
class Prediction:
    advertisers: tuple[str, ...]
    interests: tuple[str, ...]
    parse_status: str
    raw: str = ""

    @property
    def ok(self) -> bool:
        return self.parse_status == OK

    def to_dict(self, user_id: str | None = None) -> dict[str, Any]:
        out: dict[str, Any] = {} if user_id is None else {"user_id": user_id}
        out.update(
            parse_status=self.parse_status,
            advertisers=list(self.advertisers),
            interests=list(self.interests),
            raw=self.raw,
        )
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Prediction":
        return cls(
            advertisers=tuple(data.get("advertisers", ())),
            interests=tuple(data.get("interests", ())),
            parse_status=data["parse_status"],
            raw=data.get("raw", ""),
        )
