"""Predictor backends: deterministic mock, frequency baseline, remote endpoint."""
from __future__ import annotations

import json
import logging
import os
import random
import socket
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol

from .compiler import UserContext
from .errors import (
    EndpointUnreachableError,
    HttpStatusError,
    PredictorTimeoutError,
)
from .hashing import seeded_hash
from .parsing import normalize_name
from .prompting import RenderedPrompt, format_answer
from .reward import TARGET_ADVERTISERS, TARGET_INTERESTS

log = logging.getLogger(__name__)

KINDS = ("mock", "baseline", "remote")


@dataclass(frozen=True)
class PredictorSpec:
    kind: str = "mock"
    endpoint_url: str | None = None
    model_name: str | None = None
    timeout_ms: int = 30_000
    max_retries: int = 3
    temperature: float | None = None
    seed: int | None = None
    max_in_flight: int = 8
    backoff_ms: int = 200
    auth_env: str | None = None
    extra_params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if self.kind == "remote" and not (self.endpoint_url and self.model_name):
            raise ValueError("remote predictor needs endpoint_url and model_name")
        if self.max_retries < 0 or self.timeout_ms <= 0 or self.max_in_flight < 1:
            raise ValueError("invalid retry/timeout/concurrency settings")


class Predictor(Protocol):
    def predict(self, prompt: RenderedPrompt | str, context: UserContext) -> str: ...


def _dedup(names) -> list[str]:
    seen = set()
    out = []
    for name in names:
        key = normalize_name(name)
        if key and key not in seen:
            seen.add(key)
            out.append(name)
    return out


def _pad(names: list[str], n: int) -> list[str]:
    taken = {normalize_name(x) for x in names}
    k = 1
    while len(names) < n:
        filler = f"Advertiser {k}"
        if normalize_name(filler) not in taken:
            names.append(filler)
            taken.add(normalize_name(filler))
        k += 1
    return names


def baseline_rank(context: UserContext, n: int = TARGET_ADVERTISERS) -> list[str]:
    """Past-conversion advertisers (already weight-ordered), then the preset pool.

    Short lists are padded with placeholder names up to ``n``. A context with
    no advertisers at all is degenerate and yields an empty list.
    """
    names = _dedup([*context.past_conversion_advertisers, *context.preset_pool])[:n]
    if not names:
        log.warning("user %s has no candidate advertisers", context.user_id)
        return []
    return _pad(names, n)


class MockPredictor:
    """Seeded shuffle of the user's advertiser pools; ignores behavior sequences."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def predict(self, prompt, context: UserContext) -> str:
        rng = random.Random(seeded_hash(context.user_id, self.seed))
        names = _dedup([*context.past_conversion_advertisers, *context.preset_pool])
        rng.shuffle(names)
        names = _pad(names[:TARGET_ADVERTISERS], TARGET_ADVERTISERS)
        return format_answer(names, list(context.top_categories[:TARGET_INTERESTS]))


class BaselinePredictor:
    def predict(self, prompt, context: UserContext) -> str:
        return format_answer(baseline_rank(context),
                             list(context.top_categories[:TARGET_INTERESTS]))


class RemotePredictor:
    """Chat-completions style client with bounded in-flight calls and backoff."""

    def __init__(self, spec: PredictorSpec, sleep=time.sleep):
        self.spec = spec
        self._slots = threading.BoundedSemaphore(spec.max_in_flight)
        self._sleep = sleep

    def _request(self, text: str) -> urllib.request.Request:
        body: dict[str, Any] = {
            "model": self.spec.model_name,
            "messages": [{"role": "user", "content": text}],
        }
        if self.spec.temperature is not None:
            body["temperature"] = self.spec.temperature
        if self.spec.seed is not None:
            body["seed"] = self.spec.seed
        body.update(self.spec.extra_params)
        headers = {"Content-Type": "application/json"}
        if self.spec.auth_env:
            token = os.environ.get(self.spec.auth_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return urllib.request.Request(
            self.spec.endpoint_url, data=json.dumps(body).encode("utf-8"),
            headers=headers, method="POST")

    @staticmethod
    def _completion_text(payload: Mapping[str, Any]) -> str:
        choice = payload["choices"][0]
        if "message" in choice:
            return choice["message"]["content"]
        return choice["text"]

    def _attempt(self, text: str, user_id: str) -> str:
        timeout = self.spec.timeout_ms / 1000.0
        with self._slots:
            try:
                with urllib.request.urlopen(self._request(text), timeout=timeout) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
            except urllib.error.HTTPError as exc:
                raise HttpStatusError(exc.code, user_id) from None
            except (socket.timeout, TimeoutError):
                raise PredictorTimeoutError("request timed out", user_id) from None
            except urllib.error.URLError as exc:
                if isinstance(exc.reason, (socket.timeout, TimeoutError)):
                    raise PredictorTimeoutError("request timed out", user_id) from None
                raise EndpointUnreachableError(str(exc.reason), user_id) from None
            except (ConnectionError, OSError) as exc:
                raise EndpointUnreachableError(str(exc), user_id) from None
        try:
            return self._completion_text(payload)
        except (KeyError, IndexError, TypeError):
            raise HttpStatusError(502, user_id) from None

    def predict(self, prompt, context: UserContext) -> str:
        text = prompt.text if isinstance(prompt, RenderedPrompt) else prompt
        for attempt in range(self.spec.max_retries + 1):
            try:
                return self._attempt(text, context.user_id)
            except HttpStatusError as exc:
                retryable = exc.code >= 500 or exc.code == 429
                if not retryable or attempt == self.spec.max_retries:
                    raise
                err = exc
            except (EndpointUnreachableError, PredictorTimeoutError) as exc:
                if attempt == self.spec.max_retries:
                    raise
                err = exc
            delay = self.spec.backoff_ms / 1000.0 * (2 ** attempt)
            log.warning("predictor attempt %d failed (%s); retrying in %.2fs",
                        attempt + 1, err, delay)
            self._sleep(delay)
        raise AssertionError("unreachable")


def make_predictor(spec: PredictorSpec) -> Predictor:
    if spec.kind == "mock":
        return MockPredictor(spec.seed or 0)
    if spec.kind == "baseline":
        return BaselinePredictor()
    return RemotePredictor(spec)


def predict(spec: PredictorSpec, rendered_prompt: RenderedPrompt | str,
            context: UserContext) -> str:
    return make_predictor(spec).predict(rendered_prompt, context)
