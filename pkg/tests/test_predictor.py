import json
import math
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from adprior.compiler import UserContext
from adprior.domain import UserProfile
from adprior.errors import EndpointUnreachableError, HttpStatusError, PredictorTimeoutError
from adprior.parsing import parse_answer
from adprior.predictor import (
    BaselinePredictor,
    MockPredictor,
    PredictorSpec,
    RemotePredictor,
    baseline_rank,
    make_predictor,
    predict,
)
from adprior.prompting import format_answer, render_prompt


def ctx(past=(), pool=(), user="u1", categories=("garden",)):
    return UserContext(user, UserProfile(user), past_conversion_advertisers=tuple(past),
                       preset_pool=tuple(pool), top_categories=tuple(categories))


POOL = tuple(f"Pool {i}" for i in range(30))


def test_spec_validation():
    with pytest.raises(ValueError):
        PredictorSpec(kind="remote", endpoint_url="http://x")
    with pytest.raises(ValueError):
        PredictorSpec(kind="oracle")
    with pytest.raises(ValueError):
        PredictorSpec(max_retries=-1)
    assert PredictorSpec(kind="remote", endpoint_url="http://x", model_name="m").kind == "remote"


def test_mock_deterministic():
    c = ctx(["A", "B"], POOL)
    a = MockPredictor(seed=3).predict("prompt", c)
    assert a == MockPredictor(seed=3).predict("other prompt", c)
    assert a != MockPredictor(seed=4).predict("prompt", c)
    p = parse_answer(a)
    assert p.ok and len(p.advertisers) == 20 and len(p.interests) <= 5
    assert len({x.lower() for x in p.advertisers}) == 20


def test_mock_pads_short_pools():
    p = parse_answer(MockPredictor().predict("", ctx(["A"], ["B"])))
    assert len(p.advertisers) == 20 and {"A", "B"} <= set(p.advertisers)


def test_baseline_composition():
    names = baseline_rank(ctx(["A", "B"], POOL))
    assert names == ["A", "B"] + list(POOL[:18])


def test_baseline_dedups_by_normalized_name():
    names = baseline_rank(ctx(["Acme", "Beta"], ("acme.", "Gamma") + POOL))
    assert names[:3] == ["Acme", "Beta", "Gamma"]
    assert len(names) == 20


def test_baseline_top_20_of_25():
    past = [f"Past {i}" for i in range(25)]
    assert baseline_rank(ctx(past, POOL)) == past[:20]


def test_baseline_degenerate():
    assert baseline_rank(ctx()) == []
    assert not parse_answer(BaselinePredictor().predict("", ctx())).ok


def test_baseline_frequency_oracle(snapshot, contexts):
    # the most recency-weighted converting active advertiser comes first
    for user_id, c in list(contexts.items())[:200]:
        weights = {}
        now = snapshot.cutoff
        for e in snapshot.user_events(user_id):
            rec = snapshot.catalog.get(e.advertiser_id or "")
            if not e.is_conversion or rec is None:
                continue
            if not (rec.active_on_platform and rec.active_spend):
                continue
            age = (now - e.timestamp) / 86400
            if age > 90:
                continue
            weights[rec.name] = weights.get(rec.name, 0.0) + math.exp(-age / 30)
        top = parse_answer(BaselinePredictor().predict("", c)).advertisers[0]
        if weights:
            best = max(weights.values())
            assert weights.get(top) == pytest.approx(best, rel=1e-12)
        else:
            assert top == c.preset_pool[0]


def test_make_predictor_kinds():
    assert isinstance(make_predictor(PredictorSpec("mock", seed=2)), MockPredictor)
    assert isinstance(make_predictor(PredictorSpec("baseline")), BaselinePredictor)
    c = ctx(["A"], POOL)
    assert predict(PredictorSpec("baseline"), "x", c) == BaselinePredictor().predict("x", c)


# remote --------------------------------------------------------------------------

class Stub:
    """Scripted chat-completions server: each request pops the next (status, body, delay)."""

    def __init__(self, script):
        self.script = list(script)
        self.requests = []
        self.lock = threading.Lock()
        self.in_flight = 0
        self.peak = 0
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                with stub.lock:
                    stub.requests.append((body, dict(self.headers)))
                    status, payload, delay = stub.script.pop(0) if stub.script else stub.default
                    stub.in_flight += 1
                    stub.peak = max(stub.peak, stub.in_flight)
                time.sleep(delay)
                with stub.lock:
                    stub.in_flight -= 1
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.default = (200, _ok("Default"), 0.0)
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/v1/chat/completions"
        threading.Thread(target=self.server.serve_forever, daemon=True).start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


def _ok(name):
    return {"choices": [{"message": {"role": "assistant", "content": format_answer([name], [])}}]}


@pytest.fixture
def stub_factory():
    made = []

    def make(script):
        s = Stub(script)
        made.append(s)
        return s
    yield make
    for s in made:
        s.close()


def _remote(url, **kw):
    sleeps = []
    spec = PredictorSpec(kind="remote", endpoint_url=url, model_name="m", backoff_ms=10, **kw)
    return RemotePredictor(spec, sleep=sleeps.append), sleeps


def test_remote_retries_500_then_succeeds(stub_factory, monkeypatch):
    stub = stub_factory([(500, {"error": "boom"}, 0), (200, _ok("Acme"), 0)])
    monkeypatch.setenv("STUB_TOKEN", "secret")
    client, sleeps = _remote(stub.url, auth_env="STUB_TOKEN", temperature=0.2, seed=5)
    prompt = render_prompt(ctx(["A"], POOL), "inference")
    raw = client.predict(prompt, ctx())
    assert parse_answer(raw).advertisers == ("Acme",)
    assert len(stub.requests) == 2 and sleeps == [0.01]
    body, headers = stub.requests[-1]
    assert body["messages"] == [{"role": "user", "content": prompt.text}]
    assert body["model"] == "m" and body["temperature"] == 0.2 and body["seed"] == 5
    assert headers["Authorization"] == "Bearer secret"


def test_remote_gives_up_after_max_retries(stub_factory):
    stub = stub_factory([(503, {}, 0)] * 10)
    client, sleeps = _remote(stub.url, max_retries=2)
    with pytest.raises(HttpStatusError) as info:
        client.predict("p", ctx(user="u9"))
    assert info.value.code == 503 and info.value.user_id == "u9"
    assert len(stub.requests) == 3
    assert sleeps == [0.01, 0.02]


def test_remote_does_not_retry_client_errors(stub_factory):
    stub = stub_factory([(404, {}, 0), (200, _ok("A"), 0)])
    client, _ = _remote(stub.url)
    with pytest.raises(HttpStatusError):
        client.predict("p", ctx())
    assert len(stub.requests) == 1


def test_remote_retries_429(stub_factory):
    stub = stub_factory([(429, {}, 0), (200, _ok("A"), 0)])
    client, _ = _remote(stub.url)
    assert parse_answer(client.predict("p", ctx())).ok


def test_remote_timeout(stub_factory):
    stub = stub_factory([(200, _ok("slow"), 0.5)] * 2)
    client, _ = _remote(stub.url, timeout_ms=100, max_retries=1)
    start = time.monotonic()
    with pytest.raises(PredictorTimeoutError):
        client.predict("p", ctx())
    assert time.monotonic() - start < 1.0


def test_remote_unreachable():
    client, sleeps = _remote("http://127.0.0.1:9/none", max_retries=1, timeout_ms=500)
    with pytest.raises(EndpointUnreachableError):
        client.predict("p", ctx())
    assert len(sleeps) == 1


def test_remote_bounded_in_flight(stub_factory):
    stub = stub_factory([])
    stub.default = (200, _ok("A"), 0.05)
    client, _ = _remote(stub.url, max_in_flight=2)
    threads = [threading.Thread(target=client.predict, args=("p", ctx())) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(stub.requests) == 8
    assert stub.peak <= 2
