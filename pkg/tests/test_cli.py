from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from sdoh_pipeline.cli import main
from sdoh_pipeline.serde import read_ndjson

DATA = Path(__file__).parent / "data" / "toy_notes.ndjson"


@pytest.fixture()
def runner():
    return CliRunner()


def _ok(result):
    assert result.exit_code == 0, result.stderr or result.output
    return result


def test_ingest_builds_pool(runner, tmp_path):
    pool_path = tmp_path / "pool.ndjson"
    result = _ok(
        runner.invoke(
            main,
            ["ingest", "--notes", str(DATA), "--out", str(pool_path),
             "--scan-out", str(tmp_path / "scan.ndjson")],
        )
    )
    summary = json.loads(result.output)
    assert summary["notes"] == 28
    rows = list(read_ndjson(pool_path))
    assert all(r["social_history"] for r in rows)
    scan = list(read_ndjson(tmp_path / "scan.ndjson"))
    assert any(r["candidates"] for r in scan)


def test_ingest_missing_file_fails_structured(runner, tmp_path):
    result = runner.invoke(
        main, ["ingest", "--notes", str(tmp_path / "nope.ndjson"), "--out", "x"]
    )
    assert result.exit_code != 0


def _ingest(runner, tmp_path) -> Path:
    pool_path = tmp_path / "pool.ndjson"
    _ok(runner.invoke(main, ["ingest", "--notes", str(DATA), "--out", str(pool_path)]))
    return pool_path


def test_augment_is_deterministic_under_replay(runner, tmp_path):
    pool = _ingest(runner, tmp_path)
    cassette = tmp_path / "cassette.ndjson"
    args = [
        "augment", "--label", "t3_Eviction_pending", "--pool", str(pool),
        "--batch-size", "5", "--cassette", str(cassette),
    ]
    out1 = tmp_path / "batch1.ndjson"
    _ok(runner.invoke(main, args + [
        "--out", str(out1), "--cassette-mode", "record", "--demo-backend",
    ]))
    out2 = tmp_path / "batch2.ndjson"
    _ok(runner.invoke(main, args + [
        "--out", str(out2), "--cassette-mode", "replay_strict",
    ]))
    assert out1.read_bytes() == out2.read_bytes()
    rows = list(read_ndjson(out1))
    assert len(rows) == 5
    assert all(r["generated_text"] for r in rows)


def test_augment_unknown_label_fails_before_any_call(runner, tmp_path):
    pool = _ingest(runner, tmp_path)
    result = runner.invoke(
        main,
        ["augment", "--label", "bogus", "--pool", str(pool),
         "--out", str(tmp_path / "b.ndjson"), "--demo-backend"],
    )
    assert result.exit_code == 1
    err = json.loads(result.stderr)
    assert err["error"] == "InvalidLabelError"


def test_validate_accepts_demo_batch(runner, tmp_path):
    pool = _ingest(runner, tmp_path)
    batch = tmp_path / "batch.ndjson"
    pool_after = tmp_path / "pool2.ndjson"
    _ok(runner.invoke(main, [
        "augment", "--label", "t3_Eviction_pending", "--pool", str(pool),
        "--batch-size", "4", "--out", str(batch), "--pool-out", str(pool_after),
        "--demo-backend",
    ]))
    records = tmp_path / "records.ndjson"
    result = _ok(runner.invoke(main, [
        "validate", "--batch", str(batch), "--pool", str(pool_after),
        "--out", str(records), "--demo-backend",
    ]))
    summary = json.loads(result.output)
    assert summary["accepted"] == 4  # demo generations embed their label cue
    rows = list(read_ndjson(records))
    assert all(r["label"] == "t3_Eviction_pending" for r in rows)
    assert all(r["decision_provenance"] == "AcceptedAsRequired" for r in rows)
    assert all(r["rationale"] for r in rows)


def test_annotate_and_evaluate_flow(runner, tmp_path):
    notes = tmp_path / "notes.ndjson"
    notes.write_text(
        "\n".join(
            json.dumps(row)
            for row in [
                {"id": "a", "text": "Patient received an eviction notice and the court case is still pending.", "label": "t3_Eviction_pending"},
                {"id": "b", "text": "Patient has been homeless and sleeps at a shelter downtown.", "label": "t1_Homelessness"},
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    traces = tmp_path / "traces.ndjson"
    _ok(runner.invoke(main, [
        "annotate", "--notes", str(notes), "--out", str(traces), "--demo-backend",
    ]))
    rows = list(read_ndjson(traces))
    assert {r["note_id"]: r["final_label"] for r in rows} == {
        "a": "t3_Eviction_pending",
        "b": "t1_Homelessness",
    }
    assert all(r["step1_rationale"] for r in rows)

    report_path = tmp_path / "report.json"
    result = _ok(runner.invoke(main, [
        "evaluate", "--preds", str(traces), "--golds", str(notes),
        "--labelset", "all", "--out", str(report_path),
        "--table", str(tmp_path / "table.txt"),
    ]))
    report = json.loads(report_path.read_text())
    assert report["micro_f1"] == 1.0
    assert "Overall" in (tmp_path / "table.txt").read_text()


def test_evaluate_missing_predictions_fails(runner, tmp_path):
    golds = tmp_path / "golds.ndjson"
    golds.write_text('{"id": "a", "label": "t1_Homelessness"}\n', encoding="utf-8")
    preds = tmp_path / "preds.ndjson"
    preds.write_text('{"id": "b", "label": "t1_Homelessness"}\n', encoding="utf-8")
    result = runner.invoke(main, [
        "evaluate", "--preds", str(preds), "--golds", str(golds),
        "--out", str(tmp_path / "r.json"),
    ])
    assert result.exit_code == 1
    assert json.loads(result.stderr)["error"] == "ConfigError"


def _records_file(tmp_path, with_rationales=True) -> Path:
    from sdoh_pipeline.datastore import Record, save_records

    records = [
        Record.create(
            text=f"note {i}",
            label="t3_Eviction_pending",
            source="synth",
            split="sft",
            rationale=f"reason {i}" if with_rationales else None,
        )
        for i in range(4)
    ]
    path = tmp_path / "records.ndjson"
    save_records(path, records)
    return path


def test_export_label_only_and_stats(runner, tmp_path):
    records = _records_file(tmp_path)
    out = tmp_path / "sft.ndjson"
    _ok(runner.invoke(main, [
        "export", "--records", str(records), "--out", str(out),
        "--manifest", str(tmp_path / "manifest.json"),
    ]))
    rows = list(read_ndjson(out))
    assert all(r["messages"][2]["content"] == "t3_Eviction_pending" for r in rows)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["n_records"] == 4

    result = _ok(runner.invoke(main, ["stats", "--records", str(records)]))
    assert json.loads(result.output)["total"] == 4


def test_export_with_reasoning_missing_rationale_fails(runner, tmp_path):
    records = _records_file(tmp_path, with_rationales=False)
    result = runner.invoke(main, [
        "export", "--records", str(records), "--out", str(tmp_path / "sft.ndjson"),
        "--with-reasoning",
    ])
    assert result.exit_code == 1
    assert json.loads(result.stderr)["error"] == "MissingRationaleError"


def test_optimize_writes_versioned_program(runner, tmp_path):
    train = tmp_path / "train.ndjson"
    rows = [
        {"text": "Patient has been homeless and sleeps at a shelter downtown.", "label": "t1_Homelessness"},
        {"text": "Patient relies on a food pantry and often skips meals.", "label": "t1_LackOfAdequateFood"},
    ]
    train.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    out = tmp_path / "program.json"
    result = _ok(runner.invoke(main, [
        "optimize", "--train", str(train), "--dev", str(train),
        "--step", "non_eviction", "--seed", "11", "--num-candidates", "4",
        "--out", str(out), "--demo-backend",
    ]))
    summary = json.loads(result.output)
    assert summary["best_score"] == 1.0
    doc = json.loads(out.read_text())
    assert doc["version"] == 1
    assert doc["meta"]["seed"] == 11
    assert len(doc["meta"]["score_table"]) == 4


def test_demo_fixture_builds_replayable_session(runner, tmp_path):
    fixture = tmp_path / "fixture"
    _ok(runner.invoke(main, [
        "demo-fixture", "--dir", str(fixture), "--batch-size", "6",
    ]))
    assert (fixture / "session.json").exists()
    assert (fixture / "pool.ndjson").exists()
    assert (fixture / "cassette.ndjson").exists()

    from sdoh_pipeline.service import load_session

    session = load_session(fixture)
    batch = session.start()
    assert len(batch.items) == 6
    assert session.gateway.live_calls == 0
