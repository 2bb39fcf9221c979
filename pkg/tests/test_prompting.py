import re
from pathlib import Path

import pytest

from adprior.compiler import UserContext
from adprior.domain import UserProfile
from adprior.errors import BudgetExceededError, MissingSidsError
from adprior.prompting import (
    BEHAVIOR_FIELDS,
    DEFAULT_BUDGET_TOKENS,
    PromptStage,
    RenderedPrompt,
    estimate_tokens,
    format_answer,
    load_template,
    render_prompt,
    template_placeholders,
    template_prefix,
    truncate_to_budget,
)

GOLDEN = Path(__file__).parent / "golden"

CONTEXT = UserContext(
    user_id="user_golden",
    profile=UserProfile("user_golden", 34, "female", "core"),
    past_conversion_advertisers=("Maple Market", "Fable House"),
    preset_pool=("Cobalt Market", "Harbor Co", "Acorn Studio"),
    attributed_conversions=("Maple Market",),
    matched_conversions=("Fable House", "Maple Market"),
    onsite_searches=("garden gift", "patio chairs"),
    offsite_searches=("garden sale",),
    offsite_urls=("https://www.maplemarket.com/p/12",),
    top_categories=("garden", "home decor"),
    top_brands=("maplemarket", "fablehouse"),
    sid_sequences=("<sid_l0_3><sid_l1_1>", "<sid_l0_7><sid_l1_0>"),
)

GRPO_QUANTITY = "Provide up to 5 unique user interests and exactly 20 advertisers."


@pytest.mark.parametrize("stage", list(PromptStage))
def test_golden_renders(stage):
    text = render_prompt(CONTEXT, stage).text
    expected = (GOLDEN / f"prompt_{stage.value}.txt").read_bytes()
    assert text.encode("utf-8") == expected


@pytest.mark.parametrize("stage", ["grpo_text", "grpo_sid", "inference"])
def test_grpo_anchor_lines(stage):
    lines = render_prompt(CONTEXT, stage).text.splitlines()
    assert "- Return ONLY the following XML." in lines
    assert "- " + GRPO_QUANTITY in lines


@pytest.mark.parametrize("stage", ["sft_text", "sft_sid"])
def test_sft_anchor_lines(stage):
    text = render_prompt(CONTEXT, stage).text
    assert "- Provide 1 advertiser." in text.splitlines()
    assert "#Output Format" not in text
    assert "<answer>" not in text


def test_inference_uses_grpo_template():
    assert render_prompt(CONTEXT, "inference").text == render_prompt(CONTEXT, "grpo_text").text


@pytest.mark.parametrize("stage", list(PromptStage))
def test_no_unfilled_placeholders(stage):
    text = render_prompt(CONTEXT, stage).text
    names = template_placeholders(load_template(stage.template_name))
    assert names
    for name in names:
        assert "{" + name + "}" not in text


def test_sid_stage_needs_sids():
    with pytest.raises(MissingSidsError):
        render_prompt(CONTEXT.with_fields(sid_sequences=None), "grpo_sid")
    assert "sid" in load_template("grpo_sid")
    assert "{sid_sequences}" not in load_template("grpo_text")


def test_empty_behavior_lists_render_brackets():
    bare = UserContext("u", UserProfile("u"), preset_pool=("Acme",))
    text = render_prompt(bare, "grpo_text").text
    assert "Onsite Searches []" in text
    assert "Top Brands []" in text
    assert "Gender: unknown, Age: unknown, User Type: unknown" in text


def test_user_text_is_not_rescanned():
    ctx = CONTEXT.with_fields(onsite_searches=("{top_brands}", "50% off {gender}"))
    text = render_prompt(ctx, "grpo_text").text
    assert "Onsite Searches [{top_brands}, 50% off {gender}]" in text


def test_prefix_hash_is_per_template():
    other = CONTEXT.with_fields(user_id="x", onsite_searches=("a",) * 40,
                                past_conversion_advertisers=("Zed",))
    for stage in PromptStage:
        a, b = render_prompt(CONTEXT, stage), render_prompt(other, stage)
        assert a.template_prefix_hash == b.template_prefix_hash
        assert a.prefix_token_estimate == estimate_tokens(
            template_prefix(load_template(stage.template_name)))
    hashes = {render_prompt(CONTEXT, s).template_prefix_hash
              for s in ("sft_text", "sft_sid", "grpo_text", "grpo_sid")}
    assert len(hashes) == 4


def test_deterministic():
    assert render_prompt(CONTEXT, "grpo_sid") == render_prompt(CONTEXT, "grpo_sid")


def test_token_estimate():
    assert estimate_tokens("") == 0
    assert estimate_tokens("abcd") == 1
    assert estimate_tokens("abcde") == 2
    p = render_prompt(CONTEXT, "grpo_text")
    assert p.token_estimate == -(-len(p.text) // 4)
    assert DEFAULT_BUDGET_TOKENS == 8192


def test_rendered_prompt_round_trip():
    p = render_prompt(CONTEXT, "sft_sid")
    assert RenderedPrompt.from_dict(p.to_dict()) == p


# budget --------------------------------------------------------------------------

def test_under_budget_unchanged():
    assert truncate_to_budget(CONTEXT, 10_000, "grpo_text") == CONTEXT


def test_searches_trimmed_before_conversions():
    big = CONTEXT.with_fields(onsite_searches=tuple(f"query number {i}" for i in range(400)),
                              matched_conversions=tuple(f"Adv {i}" for i in range(30)))
    full = render_prompt(big, "grpo_text", budget_tokens=10**6).token_estimate
    budget = full - 300
    trimmed = truncate_to_budget(big, budget, "grpo_text")
    assert render_prompt(trimmed, "grpo_text", budget_tokens=10**6).token_estimate <= budget
    assert trimmed.matched_conversions == big.matched_conversions
    assert trimmed.top_categories == ()
    assert trimmed.top_brands == ()
    # oldest entries go first: the kept searches are a prefix of the original
    n = len(trimmed.onsite_searches)
    assert 0 < n < 400
    assert trimmed.onsite_searches == big.onsite_searches[:n]


def test_render_applies_budget_monotonically():
    big = CONTEXT.with_fields(onsite_searches=tuple(f"q{i}" for i in range(2000)))
    costs = [render_prompt(big, "grpo_text", budget_tokens=b).token_estimate
             for b in (4000, 2000, 1000)]
    assert costs == sorted(costs, reverse=True)
    assert all(c <= b for c, b in zip(costs, (4000, 2000, 1000)))


def test_keep_one_floor_and_budget_exceeded():
    with pytest.raises(BudgetExceededError):
        truncate_to_budget(CONTEXT, 10, "grpo_text")
    bare_cost = estimate_tokens(re.sub(r"\{[a-z_]+\}", "", load_template("grpo_text")))
    with pytest.raises(BudgetExceededError):
        render_prompt(CONTEXT, "grpo_text", budget_tokens=bare_cost - 1)
    tight = render_prompt(CONTEXT, "grpo_text", budget_tokens=bare_cost + 12)
    assert "Maple Market" in tight.text  # first past-conversion advertiser survives
    assert "Cobalt Market" in tight.text


def test_behavior_order():
    order = list(reversed(BEHAVIOR_FIELDS))
    text = render_prompt(CONTEXT, "grpo_text", behavior_order=order).text
    assert text.index("Top Brands [") < text.index("Attributed Conversions [")
    with pytest.raises(ValueError):
        render_prompt(CONTEXT, "grpo_text", behavior_order=order[:-1])


def test_format_answer_layout():
    expected = (GOLDEN / "answer_example.txt").read_text()
    adv = [f"Advertiser {i}" for i in range(1, 21)]
    interests = [f"interest {i}" for i in range(1, 6)]
    assert format_answer(adv, interests).strip() == expected.strip()
