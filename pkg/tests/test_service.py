from __future__ import annotations

import threading

import pytest
from fastapi.testclient import TestClient

from sdoh_pipeline import taxonomy
from sdoh_pipeline.augmenter import DEFAULT_AUGMENT_PROMPT, AugmenterState
from sdoh_pipeline.gateway import Gateway, MockBackend
from sdoh_pipeline.ingest import NotePool, RawNote
from sdoh_pipeline.service import ReviewSession, create_app


def _session(batch_size=4, pool_size=40, max_rounds=3) -> ReviewSession:
    backend = MockBackend()
    backend.add("Revise the prompt", lambda r: DEFAULT_AUGMENT_PROMPT + "\nv2")
    backend.add(lambda r: True, lambda r: f"gen<{hash(r.messages) % 9973}>")
    pool = NotePool(
        RawNote(id=f"n{i}", full_text=f"social history {i}", source="user")
        for i in range(pool_size)
    )
    return ReviewSession(
        state=AugmenterState(label=taxonomy.EVICTION_PENDING),
        pool=pool,
        gateway=Gateway(backend=backend),
        batch_size=batch_size,
        max_rounds=max_rounds,
    )


@pytest.fixture()
def client():
    session = _session()
    session.start()
    return TestClient(create_app(session))


def _batch_id(client) -> str:
    return client.get("/session").json()["batch_id"]


def test_session_view(client):
    doc = client.get("/session").json()
    assert doc["label"] == "t3_Eviction_pending"
    assert doc["status"] == "reviewing"
    assert doc["threshold"] == 0.9
    assert doc["batch_id"]


def test_list_pending_items_carry_definitions(client):
    bid = _batch_id(client)
    items = client.get(f"/batches/{bid}/items").json()
    assert len(items) == 4
    definition = taxonomy.definition_of(taxonomy.EVICTION_PENDING)
    for item in items:
        assert item["status"] == "pending"
        assert item["definition_text"] == definition.definition_text
        assert item["label"] == "t3_Eviction_pending"
        assert item["generated_text"]


def test_unknown_batch_404(client):
    assert client.get("/batches/nope/items").status_code == 404
    assert client.get("/batches/nope/progress").status_code == 404


def test_submit_then_progress_reflects_it(client):
    bid = _batch_id(client)
    items = client.get(f"/batches/{bid}/items").json()
    r = client.post(
        f"/items/{items[0]['item_id']}/verdict", json={"passed": True}
    )
    assert r.status_code == 200
    progress = client.get(f"/batches/{bid}/progress").json()
    assert progress["verdicted"] == 1
    assert progress["total"] == 4
    assert progress["accuracy"] == 1.0
    # accuracy is computed over verdicted items only
    r = client.post(
        f"/items/{items[1]['item_id']}/verdict",
        json={"passed": False, "feedback": "wrong tense"},
    )
    assert r.status_code == 200
    assert client.get(f"/batches/{bid}/progress").json()["accuracy"] == 0.5


def test_unknown_item_404(client):
    assert client.post("/items/missing/verdict", json={"passed": True}).status_code == 404


def test_double_verdict_409(client):
    bid = _batch_id(client)
    item_id = client.get(f"/batches/{bid}/items").json()[0]["item_id"]
    assert client.post(f"/items/{item_id}/verdict", json={"passed": True}).status_code == 200
    assert client.post(f"/items/{item_id}/verdict", json={"passed": True}).status_code == 409


def test_false_without_feedback_422(client):
    bid = _batch_id(client)
    item_id = client.get(f"/batches/{bid}/items").json()[0]["item_id"]
    r = client.post(f"/items/{item_id}/verdict", json={"passed": False})
    assert r.status_code == 422
    assert r.json()["detail"]["error"] == "MissingFeedbackError"


def test_idempotency_key_replays_without_duplicate(client):
    bid = _batch_id(client)
    item_id = client.get(f"/batches/{bid}/items").json()[0]["item_id"]
    body = {"passed": True, "idempotency_key": "k1"}
    first = client.post(f"/items/{item_id}/verdict", json=body)
    second = client.post(f"/items/{item_id}/verdict", json=body)
    assert first.status_code == second.status_code == 200
    assert first.json() == second.json()
    assert client.get(f"/batches/{bid}/progress").json()["verdicted"] == 1
    # a different key is a genuine duplicate -> conflict
    r = client.post(
        f"/items/{item_id}/verdict", json={"passed": True, "idempotency_key": "k2"}
    )
    assert r.status_code == 409


def _verdict_all(client, bid, fails=0, feedback="not faithful to the label"):
    items = client.get(f"/batches/{bid}/items").json()
    for i, item in enumerate(items):
        body = {"passed": i >= fails}
        if i < fails:
            body["feedback"] = feedback
        assert client.post(f"/items/{item['item_id']}/verdict", json=body).status_code == 200


def test_advance_before_all_verdicted_409(client):
    bid = _batch_id(client)
    items = client.get(f"/batches/{bid}/items").json()
    client.post(f"/items/{items[0]['item_id']}/verdict", json={"passed": True})
    r = client.post(f"/batches/{bid}/advance")
    assert r.status_code == 409
    assert r.json()["detail"]["error"] == "IncompleteVerdictsError"


def test_advance_accepts_round_at_threshold(client):
    bid = _batch_id(client)
    _verdict_all(client, bid, fails=0)
    doc = client.post(f"/batches/{bid}/advance").json()
    assert doc["status"] == "accepted"
    assert doc["accuracy"] == 1.0
    assert client.get("/session").json()["status"] == "accepted"


def test_advance_below_threshold_starts_next_round(client):
    bid = _batch_id(client)
    _verdict_all(client, bid, fails=2)  # 0.5 < 0.9
    doc = client.post(f"/batches/{bid}/advance").json()
    assert doc["status"] == "next_round"
    assert doc["round_index"] == 1
    new_bid = doc["batch_id"]
    assert new_bid != bid
    items = client.get(f"/batches/{new_bid}/items").json()
    assert len(items) == 4
    assert all(i["status"] == "pending" for i in items)


def test_exhausting_rounds_reports_threshold_not_reached():
    session = _session(batch_size=4, max_rounds=2)
    session.start()
    client = TestClient(create_app(session))
    for expected in ("next_round", "threshold_not_reached"):
        bid = _batch_id(client)
        _verdict_all(client, bid, fails=2)
        doc = client.post(f"/batches/{bid}/advance").json()
        assert doc["status"] == expected
    assert client.get("/session").json()["status"] == "threshold_not_reached"


def test_exact_threshold_accuracy_accepts():
    session = _session(batch_size=20)
    session.start()
    client = TestClient(create_app(session))
    bid = _batch_id(client)
    _verdict_all(client, bid, fails=2)  # 18/20 = 0.90 exactly
    doc = client.post(f"/batches/{bid}/advance").json()
    assert doc["status"] == "accepted"
    assert doc["accuracy"] == 0.9


def test_concurrent_duplicate_advance_single_transition():
    session = _session(batch_size=4)
    session.start()
    client = TestClient(create_app(session))
    bid = _batch_id(client)
    _verdict_all(client, bid, fails=2)
    codes = []

    def hit():
        codes.append(client.post(f"/batches/{bid}/advance").status_code)

    threads = [threading.Thread(target=hit) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert codes.count(200) >= 1
    # exactly one transition happened
    assert client.get("/session").json()["round_index"] == 1


def test_stale_batch_advance_404(client):
    bid = _batch_id(client)
    _verdict_all(client, bid, fails=2)
    client.post(f"/batches/{bid}/advance")
    assert client.post(f"/batches/{bid}/advance").status_code == 404


def test_session_history_endpoint(client):
    bid = _batch_id(client)
    _verdict_all(client, bid, fails=2)
    client.post(f"/batches/{bid}/advance")
    rows = client.get("/session/history").json()
    assert len(rows) == 1
    assert rows[0]["accuracy"] == 0.5
    assert rows[0]["n_feedback"] == 2
