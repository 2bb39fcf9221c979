import pytest

from adprior.domain import Prediction
from adprior.errors import PositionOutOfRangeError
from adprior.parsing import parse_answer
from adprior.reward import match_position, p_len, r_match, total_reward


def pred(advertisers, interests=("a", "b", "c", "d", "e")):
    return Prediction(tuple(advertisers), tuple(interests), "ok")


def test_match_position_normalized():
    assert match_position(pred(["acme ", "Beta"]), "Acme") == 1
    assert match_position(pred(["x", "y"]), "Acme") is None


def test_match_position_first_occurrence():
    names = [f"n{i}" for i in range(10)]
    names[2] = names[6] = "Acme"
    assert match_position(pred(names), "acme") == 3


def test_malformed_never_matches():
    assert match_position(Prediction(("Acme",), (), "malformed"), "Acme") is None


@pytest.mark.parametrize("i,expected", [(1, 3.9), (4, 3.6), (5, 1.5), (19, 0.1), (20, 0.0)])
def test_r_match_values(i, expected):
    assert r_match(i) == pytest.approx(expected, abs=1e-12)


def test_r_match_none_and_range():
    assert r_match(None) == 0.0
    for bad in (0, 21, -3):
        with pytest.raises(PositionOutOfRangeError):
            r_match(bad)


@pytest.mark.parametrize("n,n_star,expected", [
    (20, 20, 0.0), (18, 20, 1.2), (0, 20, 2.0), (5, 5, 0.0), (0, 5, 1.5), (40, 20, 2.0),
    (6, 5, 1.1),
])
def test_p_len_values(n, n_star, expected):
    assert p_len(n, n_star) == pytest.approx(expected, abs=1e-12)


def test_total_composition():
    top = total_reward(pred([f"A{i}" for i in range(1, 21)]), "A1")
    assert top.r_total == pytest.approx(3.9, abs=1e-12)
    assert top.match_position == 1
    miss = total_reward(pred([f"A{i}" for i in range(1, 21)]), "nobody")
    assert miss.r_total == 0.0


def test_malformed_total():
    r = total_reward(parse_answer("garbage"), "Acme")
    assert (r.r_match, r.p_adv_len, r.p_interest_len) == (0.0, 2.0, 1.5)
    assert r.r_total == -3.5


def test_hit_past_position_20_scores_no_match():
    names = [f"A{i}" for i in range(1, 26)]
    r = total_reward(pred(names), "A22")
    assert r.match_position == 22
    assert r.r_match == 0.0
    assert r.p_adv_len == pytest.approx(1.5)


def test_identity_holds():
    for n in range(0, 30):
        for pos in (None, 1, 7):
            names = [f"A{i}" for i in range(1, n + 1)]
            label = "A1" if pos == 1 else ("A7" if pos == 7 else "zzz")
            r = total_reward(pred(names), label)
            assert r.r_total == r.r_match - r.p_adv_len - r.p_interest_len


def test_breakdown_dict():
    d = total_reward(pred(["A"]), "A").to_dict("u1")
    assert d["user_id"] == "u1" and set(d) >= {"r_match", "p_adv_len", "p_interest_len", "r_total"}
