"""Scalar reward for ranked advertiser answers.

total = match - adv_len_penalty - interest_len_penalty, where a hit at
1-indexed rank i earns 0.1 * (20 - i) plus a 2.0 bonus for i <= 4, and a
count n that misses its target n* costs min(0.1 * |n - n*|, 1.0) + 1.0.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

from .domain import Prediction
from .errors import PositionOutOfRangeError
from .parsing import normalize_name

TARGET_ADVERTISERS = 20
TARGET_INTERESTS = 5
LIST_LENGTH = 20
BONUS_TOP = 4
BONUS = 2.0


@dataclass(frozen=True)
class RewardBreakdown:
    r_match: float
    p_adv_len: float
    p_interest_len: float
    r_total: float
    match_position: int | None

    def to_dict(self, user_id: str | None = None) -> dict:
        out = {} if user_id is None else {"user_id": user_id}
        out.update(asdict(self))
        return out


def match_position(prediction: Prediction, label_name: str) -> int | None:
    if not prediction.ok:
        return None
    target = normalize_name(label_name)
    for i, name in enumerate(prediction.advertisers, start=1):
        if normalize_name(name) == target:
            return i
    return None


def r_match(position: int | None) -> float:
    if position is None:
        return 0.0
    if not 1 <= position <= LIST_LENGTH:
        raise PositionOutOfRangeError(f"position {position} outside 1..{LIST_LENGTH}")
    base = 0.1 * (LIST_LENGTH - position)
    bonus = BONUS if position <= BONUS_TOP else 0.0
    return base + bonus


def p_len(n: int, n_star: int) -> float:
    if n == n_star:
        return 0.0
    return min(0.1 * abs(n - n_star), 1.0) + 1.0


def total_reward(prediction: Prediction, label_name: str) -> RewardBreakdown:
    """Compose match reward and both length penalties.

    A hit ranked past position 20 sits outside the scored list and earns no
    match reward; the oversized list is already charged by the length penalty.
    """
    position = match_position(prediction, label_name)
    scored = position if position is not None and position <= LIST_LENGTH else None
    n_adv = len(prediction.advertisers) if prediction.ok else 0
    n_int = len(prediction.interests) if prediction.ok else 0
    match = r_match(scored)
    p_adv = p_len(n_adv, TARGET_ADVERTISERS)
    p_int = p_len(n_int, TARGET_INTERESTS)
    return RewardBreakdown(match, p_adv, p_int, match - p_adv - p_int, position)
