"""Lenient parsing of predictor output into :class:`Prediction`."""
from __future__ import annotations

import re
import unicodedata

from .domain import MALFORMED, OK, Prediction

_LIST_MARKER = re.compile(r"^(?:[-*•]\s*|\d+[.)]\s*)")


def _between(text: str, open_tag: str, close_tag: str, start: int = 0) -> str | None:
    i = text.find(open_tag, start)
    if i < 0:
        return None
    j = text.find(close_tag, i + len(open_tag))
    if j < 0:
        return None
    return text[i + len(open_tag): j]


def _split_entries(block: str) -> tuple[str, ...]:
    body = block.strip()
    if body.startswith("["):
        body = body[1:]
    if body.endswith("]"):
        body = body[:-1]
    return tuple(s for s in (part.strip() for part in body.split("|")) if s)


def parse_answer(raw: str) -> Prediction:
    """Read the first ``<answer>`` block; never raises.

    Advertiser and interest lists may appear in either order and may or may
    not be wrapped in brackets. Counts are left for the reward to judge.
    """
    if not isinstance(raw, str):
        raw = raw.decode("utf-8", errors="replace") if isinstance(raw, bytes) else str(raw)
    answer = _between(raw, "<answer>", "</answer>")
    if answer is None:
        return Prediction((), (), MALFORMED, raw)
    advertisers = _between(answer, "<advertiser_names>", "</advertiser_names>")
    interests = _between(answer, "<interests>", "</interests>")
    if advertisers is None or interests is None:
        return Prediction((), (), MALFORMED, raw)
    adv = _split_entries(advertisers)
    if not adv:
        return Prediction((), (), MALFORMED, raw)
    return Prediction(adv, _split_entries(interests), OK, raw)


def parse_sft_answer(raw: str) -> str | None:
    for line in raw.strip().splitlines():
        line = line.strip()
        if not line:
            continue
        line = _LIST_MARKER.sub("", line, count=1).strip()
        if len(line) >= 2 and line[0] == line[-1] and line[0] in "\"'`":
            line = line[1:-1].strip()
        return line or None
    return None


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def normalize_name(name: str) -> str:
    """Lowercase, collapse whitespace and drop punctuation at either end."""
    out = " ".join(name.lower().split())
    while True:
        trimmed = out
        while trimmed and _is_punct(trimmed[0]):
            trimmed = trimmed[1:]
        while trimmed and _is_punct(trimmed[-1]):
            trimmed = trimmed[:-1]
        trimmed = trimmed.strip()
        if trimmed == out:
            return out
        out = trimmed
