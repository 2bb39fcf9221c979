from pathlib import Path

from hypothesis import given, settings, strategies as st

from adprior.parsing import normalize_name, parse_answer, parse_sft_answer
from adprior.prompting import format_answer

GOLDEN = Path(__file__).parent / "golden"


def test_example_answer():
    p = parse_answer((GOLDEN / "answer_example.txt").read_text())
    assert p.ok
    assert len(p.advertisers) == 20 and len(p.interests) == 5
    assert p.advertisers[0] == "Advertiser 1" and p.advertisers[-1] == "Advertiser 20"
    assert p.interests == tuple(f"interest {i}" for i in range(1, 6))


def test_no_xml():
    p = parse_answer("no xml here")
    assert not p.ok and p.advertisers == () and p.interests == ()
    assert p.raw == "no xml here"


def test_counts_not_enforced():
    p = parse_answer(format_answer([f"A{i}" for i in range(18)], ["x", "y", "z"]))
    assert p.ok and (len(p.advertisers), len(p.interests)) == (18, 3)


def test_either_tag_order_and_unbracketed_advertisers():
    raw = ("noise <answer><interests>[cats|dogs]</interests>\n"
           "<advertiser_names>\n Acme | Beta |  | Gamma \n</advertiser_names></answer> tail")
    p = parse_answer(raw)
    assert p.advertisers == ("Acme", "Beta", "Gamma")
    assert p.interests == ("cats", "dogs")


def test_first_answer_block_wins():
    raw = format_answer(["First"], ["a"]) + format_answer(["Second"], ["b"])
    assert parse_answer(raw).advertisers == ("First",)


def test_missing_tag_or_empty_advertisers():
    assert not parse_answer("<answer><advertiser_names>A</advertiser_names></answer>").ok
    assert not parse_answer("<answer><interests>[x]</interests>"
                            "<advertiser_names>[ | ]</advertiser_names></answer>").ok
    assert not parse_answer("<answer><interests>[x]</interests>").ok
    empty_interests = parse_answer("<answer><interests></interests>"
                                   "<advertiser_names>A</advertiser_names></answer>")
    assert empty_interests.ok and empty_interests.interests == ()


def test_duplicates_kept():
    assert parse_answer(format_answer(["A", "A"], [])).advertisers == ("A", "A")


def test_non_string_input():
    assert not parse_answer(b"\xff\xfe<answer>").ok
    assert not parse_answer(None).ok


@settings(max_examples=500, deadline=None)
@given(st.text())
def test_fuzz_text_never_raises(raw):
    p = parse_answer(raw)
    assert p.parse_status in ("ok", "malformed")


tags = st.sampled_from(["<answer>", "</answer>", "<interests>", "</interests>",
                        "<advertiser_names>", "</advertiser_names>", "|", "[", "]", "\n"])


@settings(max_examples=500, deadline=None)
@given(st.lists(tags | st.text(max_size=5), max_size=30))
def test_fuzz_tag_soup_never_raises(parts):
    p = parse_answer("".join(parts))
    if p.ok:
        assert p.advertisers and all(a == a.strip() and a for a in p.advertisers)


entry = st.text(st.characters(blacklist_characters="|<>\r\n", blacklist_categories=("Cs",)),
                min_size=1, max_size=12).map(str.strip).filter(bool)


@settings(max_examples=300, deadline=None)
@given(st.lists(entry, min_size=1, max_size=25), st.lists(entry, max_size=6))
def test_round_trip(advertisers, interests):
    p = parse_answer(format_answer(advertisers, interests))
    assert p.ok
    assert list(p.advertisers) == advertisers
    assert list(p.interests) == interests


def test_sft_answer():
    assert parse_sft_answer("Acme Corp\n") == "Acme Corp"
    assert parse_sft_answer("1. Acme Corp") == "Acme Corp"
    assert parse_sft_answer("- Acme Corp") == "Acme Corp"
    assert parse_sft_answer('\n\n  "Acme Corp"\nsecond line') == "Acme Corp"
    assert parse_sft_answer("") is None
    assert parse_sft_answer("   \n ") is None


def test_normalize_examples():
    assert normalize_name("  ACME  Corp. ") == "acme corp"
    assert normalize_name("acme corp") == "acme corp"
    assert normalize_name("Aç Me") == "aç me"
    assert normalize_name("«Acme»") == "acme"
    assert normalize_name("..") == ""


@given(st.text())
def test_normalize_idempotent(s):
    once = normalize_name(s)
    assert normalize_name(once) == once
