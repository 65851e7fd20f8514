from __future__ import annotations

import threading
import time

import pytest

from sdoh_pipeline.errors import (
    CassetteMissError,
    ConfigError,
    MockMissError,
    ProviderError,
)
from sdoh_pipeline.gateway import (
    Cassette,
    CassetteMode,
    CompletionRequest,
    Gateway,
    MockBackend,
    RetryPolicy,
    fingerprint,
)
from sdoh_pipeline.serde import canonical_json


def req(content="hello", **kwargs) -> CompletionRequest:
    return CompletionRequest(messages=(("user", content),), **kwargs)


def test_request_validation():
    with pytest.raises(ConfigError):
        CompletionRequest(messages=())
    with pytest.raises(ConfigError):
        req(temperature=2.5)
    with pytest.raises(ConfigError):
        req(max_tokens=0)


def test_fingerprint_depends_on_temperature_and_seed():
    base = fingerprint(req())
    assert fingerprint(req(temperature=0.5)) != base
    assert fingerprint(req(seed=1)) != base
    assert fingerprint(req()) == base


def test_fingerprint_ignores_key_order_and_whitespace():
    payload = req("x").canonical_payload()
    reordered = dict(reversed(list(payload.items())))
    assert canonical_json(payload) == canonical_json(reordered)


def test_mock_backend_rules_and_default():
    backend = MockBackend(default="fallback")
    backend.add("ping", "pong")
    gw = Gateway(backend=backend)
    assert gw.complete(req("ping me")) == "pong"
    assert gw.complete(req("something else")) == "fallback"


def test_mock_backend_without_match_raises():
    gw = Gateway(backend=MockBackend())
    with pytest.raises(MockMissError):
        gw.complete(req("nothing matches"))


def test_record_then_strict_replay(tmp_path):
    path = tmp_path / "cassette.ndjson"
    backend = MockBackend(default=lambda r: f"reply:{r.messages[-1][1]}")
    recorder = Gateway(backend=backend, cassette=Cassette(path, CassetteMode.RECORD))
    assert recorder.complete(req("a")) == "reply:a"
    assert recorder.complete(req("b")) == "reply:b"

    replayer = Gateway(cassette=Cassette(path, CassetteMode.REPLAY_STRICT))
    assert replayer.complete(req("a")) == "reply:a"
    assert replayer.complete(req("b")) == "reply:b"
    with pytest.raises(CassetteMissError):
        replayer.complete(req("never recorded"))


def test_record_mode_dedupes_repeat_requests(tmp_path):
    backend = MockBackend(default="same")
    gw = Gateway(
        backend=backend,
        cassette=Cassette(tmp_path / "c.ndjson", CassetteMode.RECORD),
    )
    gw.complete(req("x"))
    gw.complete(req("x"))
    assert len(backend.calls) == 1  # second served from the cassette


def test_fallthrough_replays_hits_and_records_misses(tmp_path):
    path = tmp_path / "c.ndjson"
    backend = MockBackend(default="live")
    Gateway(backend=backend, cassette=Cassette(path, CassetteMode.RECORD)).complete(
        req("known")
    )
    backend2 = MockBackend(default="live2")
    gw = Gateway(
        backend=backend2,
        cassette=Cassette(path, CassetteMode.REPLAY_FALLTHROUGH),
    )
    assert gw.complete(req("known")) == "live"
    assert gw.complete(req("new")) == "live2"
    assert len(backend2.calls) == 1


def test_strict_replay_requires_existing_cassette(tmp_path):
    with pytest.raises(ConfigError):
        Cassette(tmp_path / "missing.ndjson", CassetteMode.REPLAY_STRICT)


def test_gateway_requires_backend_for_record_mode(tmp_path):
    with pytest.raises(ConfigError):
        Gateway(cassette=Cassette(tmp_path / "c.ndjson", CassetteMode.RECORD))


def test_retry_on_transient_errors():
    attempts = {"n": 0}

    class Flaky:
        def send(self, request):
            attempts["n"] += 1
            if attempts["n"] < 3:
                raise ProviderError("boom", transient=True)
            return "ok"

    sleeps: list[float] = []
    gw = Gateway(
        backend=Flaky(),
        retry=RetryPolicy(attempts=3, backoff_s=(1.0, 2.0, 4.0), sleep=sleeps.append),
    )
    assert gw.complete(req()) == "ok"
    assert attempts["n"] == 3
    assert sleeps == [1.0, 2.0]


def test_no_retry_on_permanent_errors():
    calls = {"n": 0}

    class Broken:
        def send(self, request):
            calls["n"] += 1
            raise ProviderError("bad request", transient=False)

    gw = Gateway(backend=Broken(), retry=RetryPolicy(sleep=lambda s: None))
    with pytest.raises(ProviderError):
        gw.complete(req())
    assert calls["n"] == 1


def test_retry_gives_up_after_limit():
    calls = {"n": 0}

    class AlwaysDown:
        def send(self, request):
            calls["n"] += 1
            raise ProviderError("down", transient=True)

    gw = Gateway(backend=AlwaysDown(), retry=RetryPolicy(attempts=3, sleep=lambda s: None))
    with pytest.raises(ProviderError):
        gw.complete(req())
    assert calls["n"] == 3


def test_bounded_concurrency_with_probe_backend():
    state = {"now": 0, "max": 0}
    lock = threading.Lock()

    class Probe:
        def send(self, request):
            with lock:
                state["now"] += 1
                state["max"] = max(state["max"], state["now"])
            time.sleep(0.005)
            with lock:
                state["now"] -= 1
            return "ok"

    gw = Gateway(backend=Probe(), max_in_flight=3)
    requests = [req(f"r{i}") for i in range(20)]
    results = gw.complete_many(requests)
    assert results == ["ok"] * 20
    assert state["max"] <= 3


def test_run_suite_five_run_protocol(tmp_path):
    backend = MockBackend(
        default=lambda r: f"t={r.temperature}:s={r.seed}:{r.messages[-1][1]}"
    )
    gw = Gateway(
        backend=backend,
        cassette=Cassette(tmp_path / "c.ndjson", CassetteMode.RECORD),
    )
    requests = [req("a"), req("b")]
    entries = gw.run_suite(requests, (0.0, 0.5, 0.5, 0.5, 0.5))
    assert len(entries) == 10
    assert sorted({e.run_index for e in entries}) == [0, 1, 2, 3, 4]
    # distinct seeds make every run individually recorded
    assert len(backend.calls) == 10
    # replay reproduces the whole suite without a backend
    replayed = Gateway(
        cassette=Cassette(tmp_path / "c.ndjson", CassetteMode.REPLAY_STRICT)
    ).run_suite(requests, (0.0, 0.5, 0.5, 0.5, 0.5))
    assert [e.response for e in replayed] == [e.response for e in entries]


def test_run_suite_single_schedule():
    gw = Gateway(backend=MockBackend(default="r"))
    entries = gw.run_suite([req("a"), req("b")], [0.0])
    assert [e.run_index for e in entries] == [0, 0]


def test_run_suite_empty_schedule_rejected():
    gw = Gateway(backend=MockBackend(default="r"))
    with pytest.raises(ConfigError):
        gw.run_suite([req("a")], [])


def test_run_suite_preserves_partial_results_on_errors():
    class FailsOnB:
        def send(self, request):
            if "b" in request.messages[-1][1]:
                raise ProviderError("nope", transient=False)
            return "ok"

    gw = Gateway(backend=FailsOnB(), retry=RetryPolicy(sleep=lambda s: None))
    entries = gw.run_suite([req("a"), req("b")], [0.0])
    assert entries[0].response == "ok"
    assert entries[1].response is None
    assert "ProviderError" in entries[1].error


def test_replay_gateway_makes_zero_live_calls(tmp_path):
    path = tmp_path / "c.ndjson"
    Gateway(
        backend=MockBackend(default="x"),
        cassette=Cassette(path, CassetteMode.RECORD),
    ).complete(req("a"))
    gw = Gateway(cassette=Cassette(path, CassetteMode.REPLAY_STRICT))
    gw.complete(req("a"))
    assert gw.live_calls == 0
