import math

import pytest
from hypothesis import given, strategies as st

from adprior.domain import (
    HIGH_PRIORITY,
    AdvertiserRecord,
    Event,
    EventKind,
    Label,
    Prediction,
    UserProfile,
    validate_event,
)


def test_click_with_dwell_is_valid():
    assert validate_event(Event("u1", 100.0, EventKind.CLICK, item_id="i", dwell_seconds=3)) == []


def test_conversion_without_advertiser():
    e = Event("u1", 100.0, EventKind.MATCHED_CONVERSION, conversion_type=HIGH_PRIORITY)
    assert "missing advertiser_id" in validate_event(e)


def test_negative_timestamp():
    assert "negative timestamp" in validate_event(Event("u1", -1, EventKind.ONSITE_SEARCH, query="q"))


@pytest.mark.parametrize("ts", [math.nan, math.inf])
def test_non_finite_timestamp(ts):
    assert "non-finite timestamp" in validate_event(Event("u1", ts, EventKind.ONSITE_SEARCH))


def test_click_needs_non_negative_dwell():
    assert "missing dwell_seconds" in validate_event(Event("u", 1, EventKind.CLICK))
    assert "negative dwell_seconds" in validate_event(
        Event("u", 1, EventKind.CLICK, dwell_seconds=-0.5))


def test_conversion_needs_type():
    e = Event("u", 1, EventKind.CONVERSION, advertiser_id="a")
    assert validate_event(e) == ["missing conversion_type"]


def test_unknown_conversion_type():
    e = Event("u", 1, EventKind.CONVERSION, advertiser_id="a", conversion_type="urgent")
    assert any("unknown conversion_type" in p for p in validate_event(e))


def _advertiser(**kw):
    base = dict(advertiser_id="a1", name="Acme", active_on_platform=True, active_spend=True,
                market="US", shopping=True, objective="ROAS", daily_revenue=10.0)
    base.update(kw)
    return AdvertiserRecord(**base)


def test_advertiser_invariants():
    with pytest.raises(ValueError):
        _advertiser(name="")
    with pytest.raises(ValueError):
        _advertiser(daily_revenue=-1.0)
    with pytest.raises(ValueError):
        _advertiser(objective="CPC")


def test_advertiser_active_needs_both_flags():
    assert _advertiser().is_active
    assert not _advertiser(active_spend=False).is_active
    assert not _advertiser(active_on_platform=False).is_active


def test_event_from_dict_errors():
    with pytest.raises(KeyError):
        Event.from_dict({"user_id": "u", "timestamp": 1})
    with pytest.raises(ValueError):
        Event.from_dict({"user_id": "u", "timestamp": 1, "kind": "click", "colour": "red"})
    with pytest.raises(ValueError):
        Event.from_dict({"user_id": "u", "timestamp": 1, "kind": "teleport"})


events = st.builds(
    Event,
    user_id=st.text(min_size=1, max_size=8),
    timestamp=st.integers(0, 2**40),
    kind=st.sampled_from(list(EventKind)),
    advertiser_id=st.none() | st.text(max_size=6),
    query=st.none() | st.text(max_size=20),
    url=st.none() | st.text(max_size=20),
    dwell_seconds=st.none() | st.floats(0, 1e6),
    item_id=st.none() | st.text(max_size=6),
)


@given(events)
def test_event_dict_round_trip(e):
    assert Event.from_dict(e.to_dict()) == e


def test_record_round_trips():
    adv = _advertiser()
    assert AdvertiserRecord.from_dict(adv.to_dict()) == adv
    prof = UserProfile("u", 30, "female", "core", "CA", False)
    assert UserProfile.from_dict(prof.to_dict()) == prof
    lab = Label("u", "a1", "Acme", 123.0)
    assert Label.from_dict(lab.to_dict()) == lab
    pred = Prediction(("A", "B"), ("x",), "ok", "<answer>")
    assert Prediction.from_dict(pred.to_dict("u")) == pred
    assert pred.to_dict("u")["user_id"] == "u"
