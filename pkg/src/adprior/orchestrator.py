"""Checkpointed batch inference over virtual epochs.

Layout of a run directory::

    checkpoint.json          run id, completed epochs, output digests
    outputs/epoch_<i>.jsonl  one prediction record per user
    dead_letter.jsonl        users whose predictor calls failed after retries

An epoch's outputs are written to a temp file, fsynced and renamed before
the checkpoint (itself replaced atomically) lists the epoch, so a crash
loses at most the epoch in flight.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .compiler import UserContext
from .errors import CheckpointCorruptError, PredictorError
from .ingestion import read_jsonl
from .parsing import parse_answer
from .prompting import RenderedPrompt

log = logging.getLogger(__name__)

PromptSource = Callable[[str], "tuple[RenderedPrompt, UserContext]"]


class SimulatedCrash(RuntimeError):
    """Raised by test failure injectors to emulate a process dying."""


@dataclass(frozen=True)
class EpochPlan:
    run_id: str
    epochs: tuple[tuple[str, ...], ...]
    epoch_size: int

    @property
    def users(self) -> list[str]:
        return [u for epoch in self.epochs for u in epoch]


def plan_run(scheduled_users: Iterable[str], epoch_size: int, run_id: str,
             seed: int = 0) -> EpochPlan:
    if epoch_size < 1:
        raise ValueError("epoch_size must be >= 1")
    users = sorted(set(scheduled_users))
    random.Random(seed).shuffle(users)
    epochs = tuple(tuple(users[i:i + epoch_size]) for i in range(0, len(users), epoch_size))
    return EpochPlan(run_id, epochs, epoch_size)


@dataclass
class EpochCheckpoint:
    run_id: str
    completed_epochs: set[int] = field(default_factory=set)
    output_manifest: dict[int, str] = field(default_factory=dict)
    dead_letters: dict[int, list[dict]] = field(default_factory=dict)
    last_success_timestamp: float | None = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "completed_epochs": sorted(self.completed_epochs),
            "output_manifest": {str(k): v for k, v in sorted(self.output_manifest.items())},
            "dead_letters": {str(k): v for k, v in sorted(self.dead_letters.items())},
            "last_success_timestamp": self.last_success_timestamp,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EpochCheckpoint":
        return cls(
            run_id=data["run_id"],
            completed_epochs=set(data["completed_epochs"]),
            output_manifest={int(k): v for k, v in data["output_manifest"].items()},
            dead_letters={int(k): v for k, v in data.get("dead_letters", {}).items()},
            last_success_timestamp=data.get("last_success_timestamp"),
        )


@dataclass(frozen=True)
class CacheStats:
    total_prompts: int
    distinct_template_prefixes: int
    estimated_cached_tokens: int
    estimated_total_tokens: int


@dataclass
class RunSummary:
    run_id: str
    epochs_total: int
    epochs_run: list[int]
    epochs_skipped: list[int]
    predictor_calls: int
    dead_letters: int
    peak_in_flight: int = 0
    cache: CacheStats | None = None


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    try:
        dir_fd = os.open(path.parent, os.O_RDONLY)
    except OSError:
        return
    try:
        os.fsync(dir_fd)
    finally:
        os.close(dir_fd)


def epoch_path(run_dir: Path, index: int) -> Path:
    return Path(run_dir) / "outputs" / f"epoch_{index}.jsonl"


def load_checkpoint(run_dir: str | Path, run_id: str) -> EpochCheckpoint:
    """Checkpoint for ``run_id``, dropping epochs whose outputs no longer verify."""
    path = Path(run_dir) / "checkpoint.json"
    if not path.exists():
        return EpochCheckpoint(run_id)
    try:
        ckpt = EpochCheckpoint.from_dict(json.loads(path.read_text()))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CheckpointCorruptError(f"unreadable checkpoint {path}: {exc}") from None
    if ckpt.run_id != run_id:
        raise CheckpointCorruptError(
            f"checkpoint belongs to run {ckpt.run_id!r}, not {run_id!r}")
    for index in sorted(ckpt.completed_epochs):
        out = epoch_path(run_dir, index)
        if not out.exists() or _digest(out) != ckpt.output_manifest.get(index):
            log.warning("epoch %d output missing or altered; it will be recomputed", index)
            ckpt.completed_epochs.discard(index)
            ckpt.output_manifest.pop(index, None)
            ckpt.dead_letters.pop(index, None)
    return ckpt


def _save_checkpoint(run_dir: Path, ckpt: EpochCheckpoint) -> None:
    _atomic_write(run_dir / "checkpoint.json",
                  (json.dumps(ckpt.to_dict(), indent=1) + "\n").encode("utf-8"))
    lines = [json.dumps(rec, ensure_ascii=False, sort_keys=True)
             for i in sorted(ckpt.dead_letters) for rec in ckpt.dead_letters[i]]
    _atomic_write(run_dir / "dead_letter.jsonl",
                  "".join(line + "\n" for line in lines).encode("utf-8"))


class _InFlight:
    def __init__(self):
        self.lock = threading.Lock()
        self.current = 0
        self.peak = 0
        self.calls = 0


def run_epochs(
    plan: EpochPlan,
    run_dir: str | Path,
    predictor,
    prompt_source: PromptSource,
    *,
    concurrency: int = 4,
    failure_injector: Callable[[str, int], None] | None = None,
    watermark: float | None = None,
) -> RunSummary:
    """Process unfinished epochs in order and commit each one atomically.

    ``failure_injector(point, epoch)`` is called at ``"before_epoch"``,
    ``"mid_epoch"`` and ``"after_commit"``; raising from it emulates a crash.
    ``watermark`` is recorded as ``last_success_timestamp`` once every
    epoch has committed (defaults to wall-clock time).
    """
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    run_dir = Path(run_dir)
    (run_dir / "outputs").mkdir(parents=True, exist_ok=True)
    ckpt = load_checkpoint(run_dir, plan.run_id)
    stats = _InFlight()
    prompts: list[RenderedPrompt] = []

    def call(user_id: str):
        prompt, context = prompt_source(user_id)
        with stats.lock:
            stats.current += 1
            stats.calls += 1
            stats.peak = max(stats.peak, stats.current)
        try:
            raw = predictor.predict(prompt, context)
            return prompt, parse_answer(raw).to_dict(user_id), None
        except PredictorError as exc:
            return prompt, None, {"user_id": user_id, "error": type(exc).__name__,
                                  "message": str(exc)}
        finally:
            with stats.lock:
                stats.current -= 1

    ran, skipped = [], []
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        for index, users in enumerate(plan.epochs):
            if index in ckpt.completed_epochs:
                skipped.append(index)
                continue
            if failure_injector:
                failure_injector("before_epoch", index)
            results = list(pool.map(call, users))
            if failure_injector:
                failure_injector("mid_epoch", index)
            records = [rec for _, rec, _ in results if rec is not None]
            dead = [d for _, _, d in results if d is not None]
            prompts.extend(p for p, _, _ in results)
            body = "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n"
                           for r in records)
            out = epoch_path(run_dir, index)
            _atomic_write(out, body.encode("utf-8"))
            ckpt.completed_epochs.add(index)
            ckpt.output_manifest[index] = _digest(out)
            if dead:
                ckpt.dead_letters[index] = dead
            else:
                ckpt.dead_letters.pop(index, None)
            if len(ckpt.completed_epochs) == len(plan.epochs):
                ckpt.last_success_timestamp = time.time() if watermark is None else watermark
            _save_checkpoint(run_dir, ckpt)
            ran.append(index)
            if failure_injector:
                failure_injector("after_commit", index)
    if not ran and len(ckpt.completed_epochs) == len(plan.epochs):
        if ckpt.last_success_timestamp is None:
            ckpt.last_success_timestamp = time.time() if watermark is None else watermark
        _save_checkpoint(run_dir, ckpt)
    return RunSummary(plan.run_id, len(plan.epochs), ran, skipped, stats.calls,
                      sum(len(v) for v in ckpt.dead_letters.values()), stats.peak,
                      cache_accounting(prompts) if prompts else None)


def collect_outputs(run_dir: str | Path) -> dict[str, dict]:
    """Committed prediction records keyed by user id."""
    out: dict[str, dict] = {}
    outputs = Path(run_dir) / "outputs"
    for path in sorted(outputs.glob("epoch_*.jsonl"), key=lambda p: int(p.stem.split("_")[1])):
        for rec in read_jsonl(path, dict):
            out[rec["user_id"]] = rec
    return out


def merge_incremental(prior: Mapping[str, dict], fresh: Mapping[str, dict]) -> dict[str, dict]:
    merged = dict(prior)
    merged.update(fresh)
    return dict(sorted(merged.items()))


def incremental_user_set(all_users: Iterable[str], events: Iterable,
                         last_success_timestamp: float | None,
                         extra_users: Iterable[str] = ()) -> list[str]:
    """Users with at least one event newer than the last successful run.

    ``extra_users`` widens the set, e.g. with users whose advertisers changed
    in the catalog; it is still intersected with ``all_users``.
    """
    users = set(all_users)
    if last_success_timestamp is None:
        return sorted(users)
    touched = {e.user_id for e in events if e.timestamp > last_success_timestamp}
    touched.update(extra_users)
    return sorted(users & touched)


def cache_accounting(prompts: Sequence[RenderedPrompt]) -> CacheStats:
    groups: dict[int, list[RenderedPrompt]] = {}
    for p in prompts:
        groups.setdefault(p.template_prefix_hash, []).append(p)
    cached = sum((len(g) - 1) * g[0].prefix_token_estimate for g in groups.values())
    return CacheStats(
        total_prompts=len(prompts),
        distinct_template_prefixes=len(groups),
        estimated_cached_tokens=cached,
        estimated_total_tokens=sum(p.token_estimate for p in prompts),
    )
