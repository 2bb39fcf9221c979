"""Stage-specific prompt rendering and prompt-length budgeting."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Any, Sequence

from .compiler import UserContext
from .errors import BudgetExceededError, MissingSidsError
from .hashing import text_hash

DEFAULT_BUDGET_TOKENS = 8192
ITEM_SEPARATOR = ", "

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


class PromptStage(str, Enum):
    SFT_TEXT = "sft_text"
    SFT_SID = "sft_sid"
    GRPO_TEXT = "grpo_text"
    GRPO_SID = "grpo_sid"
    INFERENCE = "inference"

    @property
    def template_name(self) -> str:
        # inference shares the GRPO output contract
        return "grpo_text" if self is PromptStage.INFERENCE else self.value

    @property
    def needs_sids(self) -> bool:
        return self in (PromptStage.SFT_SID, PromptStage.GRPO_SID)


# Behavior lines as they appear in the templates, keyed by context field.
BEHAVIOR_FIELDS = (
    "attributed_conversions", "matched_conversions", "onsite_searches",
    "offsite_searches", "offsite_urls", "top_categories", "top_brands",
)

# Oldest-first trimming order; the last two are never cut below one entry.
TRIM_ORDER = (
    "top_categories", "top_brands", "onsite_searches", "offsite_searches",
    "offsite_urls", "sid_sequences", "attributed_conversions", "matched_conversions",
    "past_conversion_advertisers", "preset_pool",
)
_KEEP_ONE = frozenset({"past_conversion_advertisers", "preset_pool"})


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    stage: PromptStage
    token_estimate: int
    template_prefix_hash: int
    prefix_token_estimate: int
    user_id: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "user_id": self.user_id,
            "stage": self.stage.value,
            "text": self.text,
            "template_prefix_hash": self.template_prefix_hash,
            "token_estimate": self.token_estimate,
            "prefix_token_estimate": self.prefix_token_estimate,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RenderedPrompt":
        return cls(
            text=data["text"],
            stage=PromptStage(data["stage"]),
            token_estimate=data.get("token_estimate", estimate_tokens(data["text"])),
            template_prefix_hash=data["template_prefix_hash"],
            prefix_token_estimate=data.get("prefix_token_estimate", 0),
            user_id=data.get("user_id", ""),
        )


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files("adprior").joinpath("templates", f"{name}.txt").read_text(
        encoding="utf-8")


def template_prefix(template: str) -> str:
    m = _PLACEHOLDER.search(template)
    return template if m is None else template[: m.start()]


def template_placeholders(template: str) -> set[str]:
    return set(_PLACEHOLDER.findall(template))


def _reorder_behavior(template: str, order: Sequence[str]) -> str:
    if sorted(order) != sorted(BEHAVIOR_FIELDS):
        raise ValueError("behavior_order must be a permutation of the behavior fields")
    lines = template.split("\n")
    slots = {}
    for i, line in enumerate(lines):
        names = _PLACEHOLDER.findall(line)
        if len(names) == 1 and names[0] in BEHAVIOR_FIELDS:
            slots[names[0]] = i
    positions = sorted(slots.values())
    by_name = {name: lines[i] for name, i in slots.items()}
    reordered = [by_name[name] for name in order]
    for pos, line in zip(positions, reordered):
        lines[pos] = line
    return "\n".join(lines)


def _join(items: Sequence[str]) -> str:
    return ITEM_SEPARATOR.join(items)


def _values(context: UserContext, preset_pool: Sequence[str]) -> dict[str, str]:
    profile = context.profile
    return {
        "preset_advertiser_pool": _join(preset_pool),
        "active_advertisers_with_past_conversions": _join(context.past_conversion_advertisers),
        "gender": profile.gender or "unknown",
        "age": "unknown" if profile.age is None else str(profile.age),
        "userstate": profile.user_state or "unknown",
        "attributed_conversions": _join(context.attributed_conversions),
        "matched_conversions": _join(context.matched_conversions),
        "onsite_searches": _join(context.onsite_searches),
        "offsite_searches": _join(context.offsite_searches),
        "offsite_urls": _join(context.offsite_urls),
        "top_categories": _join(context.top_categories),
        "top_brands": _join(context.top_brands),
        "sid_sequences": _join(context.sid_sequences or ()),
    }


def _substitute(template: str, values: dict[str, str]) -> str:
    # single pass: user text is never rescanned for placeholders
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template)


def _render_raw(context, stage, preset_pool, behavior_order, user_id) -> RenderedPrompt:
    template = load_template(stage.template_name)
    if behavior_order is not None:
        template = _reorder_behavior(template, behavior_order)
    values = _values(context, preset_pool)
    missing = template_placeholders(template) - values.keys()
    if missing:
        raise KeyError(f"unfilled placeholders: {sorted(missing)}")
    text = _substitute(template, values)
    prefix = template_prefix(template)
    return RenderedPrompt(
        text=text,
        stage=stage,
        token_estimate=estimate_tokens(text),
        template_prefix_hash=text_hash(prefix),
        prefix_token_estimate=estimate_tokens(prefix),
        user_id=user_id,
    )


def truncate_to_budget(
    context: UserContext,
    budget_tokens: int,
    stage: PromptStage | str = PromptStage.INFERENCE,
    preset_pool: Sequence[str] | None = None,
) -> UserContext:
    """Drop the oldest entries, lowest-value fields first, until the prompt fits.

    A ``preset_pool`` argument replaces the context's own pool before trimming.
    """
    stage = PromptStage(stage)
    if preset_pool is not None:
        context = context.with_fields(preset_pool=tuple(preset_pool))

    def cost(ctx: UserContext) -> int:
        return _render_raw(ctx, stage, ctx.preset_pool, None, ctx.user_id).token_estimate

    if cost(context) <= budget_tokens:
        return context
    for name in TRIM_ORDER:
        current = getattr(context, name)
        if current is None:
            continue
        current = list(current)
        floor = 1 if name in _KEEP_ONE else 0
        while len(current) > floor:
            current.pop()
            context = context.with_fields(**{name: tuple(current)})
            if cost(context) <= budget_tokens:
                return context
    raise BudgetExceededError(
        f"prompt needs {cost(context)} estimated tokens even when minimal; "
        f"budget is {budget_tokens}")


def render_prompt(
    context: UserContext,
    stage: PromptStage | str,
    preset_pool: Sequence[str] | None = None,
    *,
    budget_tokens: int = DEFAULT_BUDGET_TOKENS,
    behavior_order: Sequence[str] | None = None,
) -> RenderedPrompt:
    """Fill the stage template from ``context``, trimming it first if over budget."""
    stage = PromptStage(stage)
    if stage.needs_sids and context.sid_sequences is None:
        raise MissingSidsError(f"stage {stage.value} needs SID sequences for {context.user_id}")
    if preset_pool is not None:
        context = context.with_fields(preset_pool=tuple(preset_pool))
    rendered = _render_raw(context, stage, context.preset_pool, behavior_order, context.user_id)
    if rendered.token_estimate <= budget_tokens:
        return rendered
    trimmed = truncate_to_budget(context, budget_tokens, stage)
    return _render_raw(trimmed, stage, trimmed.preset_pool, behavior_order, context.user_id)


def format_answer(advertisers: Sequence[str], interests: Sequence[str]) -> str:
    """Render the structured answer block the GRPO and inference stages expect."""
    return (
        "<answer>\n"
        "<advertiser_names>\n"
        f"[{'|'.join(advertisers)}]\n"
        "</advertiser_names>\n"
        "<interests>\n"
        f"[{'|'.join(interests)}]\n"
        "</interests>\n"
        "</answer>\n"
    )
