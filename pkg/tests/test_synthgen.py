import importlib.util
import json
from pathlib import Path

import pytest

from adprior.cohort import CohortConfig, build_label
from adprior.domain import validate_event
from adprior.ingestion import anchor_cutoff, build_snapshot, future_events
from adprior.synthgen import generate_world

GOLDEN = Path(__file__).parent / "golden"


def labels_of(world):
    snap = build_snapshot(world.events, world.catalog, world.profiles, world.anchor_date)
    by_user = {}
    for e in future_events(world.events, world.anchor_date):
        by_user.setdefault(e.user_id, []).append(e)
    config = CohortConfig.v1()
    out = {}
    for user, evs in by_user.items():
        lab = build_label(evs, snap.catalog, config, world.anchor_date)
        if lab is not None:
            out[user] = lab
    return out


def test_same_seed_same_files(tmp_path):
    for name in ("a", "b"):
        generate_world(60, 15, 80, 30, seed=5, affinity_strength=0.7).save(tmp_path / name)
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == ["catalog.jsonl", "events.jsonl", "items.jsonl", "planted_truth.jsonl",
                     "profiles.jsonl", "world.json"]
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_different_seed_differs():
    a = generate_world(60, 15, 80, 30, seed=5, affinity_strength=0.7)
    b = generate_world(60, 15, 80, 30, seed=6, affinity_strength=0.7)
    assert a.events != b.events


def test_events_are_valid(small_world):
    assert all(validate_event(e) == [] for e in small_world.events)
    ids = {a.advertiser_id for a in small_world.catalog}
    assert all(e.advertiser_id in ids for e in small_world.events if e.advertiser_id)
    assert set(small_world.planted_truth) == {p.user_id for p in small_world.profiles}


def test_history_and_future_both_present(small_world):
    cutoff = anchor_cutoff(small_world.anchor_date)
    assert any(e.timestamp < cutoff for e in small_world.events)
    assert any(e.timestamp >= cutoff for e in small_world.events)


def test_full_affinity_labels_are_planted():
    world = generate_world(400, 60, 300, 60, seed=2, affinity_strength=1.0)
    labels = labels_of(world)
    assert len(labels) > 300
    assert all(lab.advertiser_id == world.planted_truth[u] for u, lab in labels.items())


@pytest.mark.parametrize("affinity", [0.5, 0.9])
def test_label_rate_tracks_affinity(affinity):
    world = generate_world(1500, 100, 500, 60, seed=4, affinity_strength=affinity)
    labels = labels_of(world)
    rate = sum(lab.advertiser_id == world.planted_truth[u] for u, lab in labels.items()) / len(labels)
    assert rate >= affinity - 0.03


def test_bad_arguments():
    with pytest.raises(ValueError):
        generate_world(0, 1, 1, 1, seed=0, affinity_strength=0.5)
    with pytest.raises(ValueError):
        generate_world(1, 1, 1, 1, seed=0, affinity_strength=1.5)


def test_baseline_recall_inside_reference_band():
    band = json.loads((GOLDEN / "recall_band.json").read_text())
    spec = importlib.util.spec_from_file_location(
        "make_recall_band", Path(__file__).parent / "tools" / "make_recall_band.py")
    tool = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(tool)
    assert band["world"] == tool.WORLD
    for seed in (7, 8):
        assert band["low"] <= tool.baseline_recall_at_1(seed) <= band["high"]
