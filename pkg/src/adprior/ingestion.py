"""JSON-lines readers/writers and date-anchored snapshots."""
from __future__ import annotations

import datetime as dt
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .domain import AdvertiserRecord, Event, UserProfile
from .errors import LeakageError, ParseError

DAY = 86400.0


def day_start(d: dt.date) -> float:
    """UTC epoch seconds at 00:00 of ``d``."""
    return float(dt.datetime(d.year, d.month, d.day, tzinfo=dt.timezone.utc).timestamp())


def anchor_cutoff(anchor_date: dt.date) -> float:
    """Exclusive upper bound for snapshot events: midnight UTC after the anchor day."""
    return day_start(anchor_date + dt.timedelta(days=1))


def parse_date(value: str | dt.date) -> dt.date:
    if isinstance(value, dt.date):
        return value
    return dt.date.fromisoformat(value)


def _dump(obj: Mapping[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def read_jsonl(path: str | Path, decode: Callable[[dict], Any]) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid json: {exc.msg}") from None
            if not isinstance(data, dict):
                raise ParseError(lineno, "expected a json object")
            try:
                out.append(decode(data))
            except KeyError as exc:
                raise ParseError(lineno, f"missing field {exc.args[0]!r}") from None
            except (TypeError, ValueError) as exc:
                raise ParseError(lineno, str(exc)) from None
    return out


def write_jsonl(rows: Iterable[Mapping[str, Any]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(_dump(row))
            fh.write("\n")


def read_events(path: str | Path) -> list[Event]:
    return read_jsonl(path, Event.from_dict)


def write_events(events: Iterable[Event], path: str | Path) -> None:
    write_jsonl((e.to_dict() for e in events), path)


def read_catalog(path: str | Path) -> list[AdvertiserRecord]:
    return read_jsonl(path, AdvertiserRecord.from_dict)


def write_catalog(catalog: Iterable[AdvertiserRecord], path: str | Path) -> None:
    write_jsonl((a.to_dict() for a in catalog), path)


def read_profiles(path: str | Path) -> list[UserProfile]:
    return read_jsonl(path, UserProfile.from_dict)


def write_profiles(profiles: Iterable[UserProfile], path: str | Path) -> None:
    write_jsonl((p.to_dict() for p in profiles), path)


@dataclass
class Snapshot:
    """Everything observable at the end of ``anchor_date`` (UTC)."""

    anchor_date: dt.date
    events: Sequence[Event]
    catalog: Mapping[str, AdvertiserRecord]
    profiles: Mapping[str, UserProfile]
    _by_user: dict[str, list[Event]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_user: dict[str, list[Event]] = defaultdict(list)
        for e in self.events:
            by_user[e.user_id].append(e)
        self._by_user = dict(by_user)

    @property
    def cutoff(self) -> float:
        return anchor_cutoff(self.anchor_date)

    @property
    def user_ids(self) -> list[str]:
        return sorted(set(self._by_user) | set(self.profiles))

    def has_user(self, user_id: str) -> bool:
        return user_id in self._by_user or user_id in self.profiles

    def user_events(self, user_id: str) -> list[Event]:
        """Events of one user; raises LeakageError if any lies past the cutoff."""
        events = self._by_user.get(user_id, [])
        cutoff = self.cutoff
        for e in events:
            if e.timestamp >= cutoff:
                raise LeakageError(
                    f"event at {e.timestamp} is past the anchor cutoff {cutoff}"
                )
        return events


def build_snapshot(
    events: Iterable[Event],
    catalog: Iterable[AdvertiserRecord] | Mapping[str, AdvertiserRecord],
    profiles: Iterable[UserProfile] | Mapping[str, UserProfile],
    anchor_date: dt.date | str,
) -> Snapshot:
    anchor_date = parse_date(anchor_date)
    cutoff = anchor_cutoff(anchor_date)
    kept = [e for e in events if e.timestamp < cutoff]
    if not isinstance(catalog, Mapping):
        catalog = {a.advertiser_id: a for a in catalog}
    if not isinstance(profiles, Mapping):
        profiles = {p.user_id: p for p in profiles}
    return Snapshot(anchor_date, kept, dict(catalog), dict(profiles))


def future_events(events: Iterable[Event], anchor_date: dt.date | str) -> list[Event]:
    """Events after the anchor day: label material only."""
    cutoff = anchor_cutoff(parse_date(anchor_date))
    return [e for e in events if e.timestamp >= cutoff]


def save_snapshot(snapshot: Snapshot, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_events(snapshot.events, directory / "events.jsonl")
    write_catalog(snapshot.catalog.values(), directory / "catalog.jsonl")
    write_profiles(snapshot.profiles.values(), directory / "profiles.jsonl")
    (directory / "snapshot.json").write_text(
        json.dumps({"anchor_date": snapshot.anchor_date.isoformat()}) + "\n"
    )


def load_snapshot(directory: str | Path) -> Snapshot:
    directory = Path(directory)
    meta = json.loads((directory / "snapshot.json").read_text())
    return build_snapshot(
        read_events(directory / "events.jsonl"),
        read_catalog(directory / "catalog.jsonl"),
        read_profiles(directory / "profiles.jsonl"),
        meta["anchor_date"],
    )
