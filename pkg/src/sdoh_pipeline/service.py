"""HTTP review API: the transport for human verdicts.

The service owns one augmentation session (one label's loop).  Reviewers
list pending items, submit True/False verdicts (False requires feedback),
watch progress toward the accuracy threshold, and advance the round once
everything is verdicted.  Verdict submission is the *only* write path for
verdicts, and advancing the round is the only path that mutates the
augmenter state; both are serialized behind the session lock.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import augmenter
from .augmenter import AugmentationBatch, AugmenterState, BatchItem
from .errors import (
    AlreadyVerdictedError,
    ConfigError,
    IncompleteVerdictsError,
    MissingFeedbackError,
    PipelineError,
    UnknownItemError,
)
from .gateway import Backend, Cassette, CassetteMode, Gateway
from .ingest import NotePool
from .taxonomy import DEFAULT_TAXONOMY, Taxonomy


@dataclass
class ReviewSession:
    """One label's augmentation loop, driven over HTTP."""

    state: AugmenterState
    pool: NotePool
    gateway: Gateway
    taxonomy: Taxonomy = DEFAULT_TAXONOMY
    threshold: float = 0.90
    max_rounds: int = 3
    batch_size: int = 20
    temperature: float = 0.7
    batch: AugmentationBatch | None = None
    status: str = "idle"  # idle | reviewing | accepted | threshold_not_reached
    accepted: list[BatchItem] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _idem: dict[tuple[str, str], dict] = field(default_factory=dict, repr=False)

    def start(self) -> AugmentationBatch:
        with self._lock:
            if self.batch is not None:
                return self.batch
            self._new_batch()
            return self.batch

    def _new_batch(self) -> None:
        notes = self.pool.draw(self.batch_size)
        self.batch = augmenter.generate_batch(
            self.state,
            notes,
            self.gateway,
            taxonomy=self.taxonomy,
            temperature=self.temperature,
        )
        self.status = "reviewing"

    def _require_batch(self, batch_id: str | None = None) -> AugmentationBatch:
        if self.batch is None:
            raise UnknownItemError("no active batch; session not started")
        if batch_id is not None and batch_id != self.batch.batch_id:
            raise UnknownItemError(f"unknown batch {batch_id!r}")
        return self.batch

    def session_view(self) -> dict:
        return {
            "label": self.state.label.canonical_name,
            "status": self.status,
            "round_index": self.state.round_index,
            "max_rounds": self.max_rounds,
            "threshold": self.threshold,
            "batch_id": self.batch.batch_id if self.batch else None,
            "accepted_total": len(self.accepted),
        }

    def list_items(self, batch_id: str, *, pending_only: bool = True) -> list[dict]:
        batch = self._require_batch(batch_id)
        definition = self.taxonomy.definition_of(batch.label)
        views = []
        for item in batch.live_items():
            if pending_only and item.verdict is not None:
                continue
            views.append(
                {
                    "item_id": item.item_id,
                    "batch_id": batch.batch_id,
                    "label": batch.label.canonical_name,
                    "generated_text": item.generated_text,
                    "definition_text": definition.definition_text,
                    "few_shot_snippets": list(definition.few_shot_snippets),
                    "status": "pending" if item.verdict is None else "verdicted",
                }
            )
        return views

    def submit_verdict(
        self,
        item_id: str,
        passed: bool,
        feedback: str | None,
        idempotency_key: str | None = None,
    ) -> dict:
        with self._lock:
            batch = self._require_batch()
            if idempotency_key is not None:
                cached = self._idem.get((item_id, idempotency_key))
                if cached is not None:
                    return cached
            augmenter.record_verdict(batch, item_id, passed, feedback)
            result = {
                "item_id": item_id,
                "batch_id": batch.batch_id,
                "status": "verdicted",
                "passed": passed,
            }
            if idempotency_key is not None:
                self._idem[(item_id, idempotency_key)] = result
            return result

    def progress(self, batch_id: str | None = None) -> dict:
        batch = self._require_batch(batch_id)
        live = batch.live_items()
        verdicted = [it for it in live if it.verdict is not None]
        passed = sum(1 for it in verdicted if it.verdict.passed)
        return {
            "batch_id": batch.batch_id,
            "verdicted": len(verdicted),
            "total": len(live),
            "accuracy": (passed / len(verdicted)) if verdicted else None,
            "threshold": self.threshold,
            "round_index": self.state.round_index,
            "max_rounds": self.max_rounds,
            "status": self.status,
        }

    def advance_round(self, batch_id: str | None = None) -> dict:
        """Close the round: accept at threshold, otherwise revise and regenerate.

        Serialized: concurrent duplicates see the new round's unverdicted
        batch and fail with IncompleteVerdicts instead of double-advancing.
        """
        with self._lock:
            batch = self._require_batch(batch_id)
            outcome = augmenter.close_round(self.state, batch, self.pool)
            self.accepted.extend(
                it for it in batch.live_items() if it.item_id in outcome.accepted_ids
            )
            if outcome.accuracy >= self.threshold:
                self.status = "accepted"
                return {
                    "status": "accepted",
                    "accuracy": outcome.accuracy,
                    "round_index": self.state.round_index,
                    "accepted_total": len(self.accepted),
                }
            if self.state.round_index >= self.max_rounds:
                self.status = "threshold_not_reached"
                return {
                    "status": "threshold_not_reached",
                    "accuracy": outcome.accuracy,
                    "round_index": self.state.round_index,
                    "accepted_total": len(self.accepted),
                }
            self.state.current_prompt = augmenter.optimize_prompt(
                self.state, self.gateway
            )
            self._new_batch()
            return {
                "status": "next_round",
                "accuracy": outcome.accuracy,
                "round_index": self.state.round_index,
                "batch_id": self.batch.batch_id,
                "accepted_total": len(self.accepted),
            }


class VerdictBody(BaseModel):
    passed: bool
    feedback: str | None = None
    idempotency_key: str | None = None


_STATUS_CODES: tuple[tuple[type, int], ...] = (
    (UnknownItemError, 404),
    (AlreadyVerdictedError, 409),
    (IncompleteVerdictsError, 409),
    (MissingFeedbackError, 422),
)


def _http_error(exc: PipelineError) -> HTTPException:
    for etype, code in _STATUS_CODES:
        if isinstance(exc, etype):
            return HTTPException(
                status_code=code,
                detail={"error": type(exc).__name__, "message": str(exc)},
            )
    return HTTPException(
        status_code=500, detail={"error": type(exc).__name__, "message": str(exc)}
    )


def create_app(session: ReviewSession) -> FastAPI:
    app = FastAPI(title="sdoh-pipeline review API")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.session = session

    def guarded(fn, *args, **kwargs) -> Any:
        try:
            return fn(*args, **kwargs)
        except PipelineError as exc:
            raise _http_error(exc) from exc

    @app.get("/health")
    def health():
        return {"ok": True}

    @app.get("/session")
    def session_view():
        return session.session_view()

    @app.get("/session/history")
    def session_history():
        return augmenter.history_rows(session.state)

    @app.get("/batches/{batch_id}/items")
    def list_items(batch_id: str, pending_only: bool = True):
        return guarded(session.list_items, batch_id, pending_only=pending_only)

    @app.post("/items/{item_id}/verdict")
    def submit_verdict(item_id: str, body: VerdictBody):
        return guarded(
            session.submit_verdict,
            item_id,
            body.passed,
            body.feedback,
            body.idempotency_key,
        )

    @app.get("/batches/{batch_id}/progress")
    def progress(batch_id: str):
        return guarded(session.progress, batch_id)

    @app.post("/batches/{batch_id}/advance")
    def advance(batch_id: str):
        return guarded(session.advance_round, batch_id)

    return app


def load_session(
    session_dir: str | Path, *, backend: Backend | None = None
) -> ReviewSession:
    """Build a session from a directory: session.json, pool.ndjson, cassette.

    ``session.json`` fields: label (required), prompt, batch_size, threshold,
    max_rounds, temperature, cassette (filename), cassette_mode.
    """
    session_dir = Path(session_dir)
    cfg_path = session_dir / "session.json"
    if not cfg_path.exists():
        raise ConfigError(f"missing session config: {cfg_path}")
    cfg = json.loads(cfg_path.read_text(encoding="utf-8"))
    taxonomy = DEFAULT_TAXONOMY
    label = taxonomy.parse_label(cfg["label"])
    state = AugmenterState(
        label=label,
        current_prompt=cfg.get("prompt", augmenter.DEFAULT_AUGMENT_PROMPT),
    )
    pool = NotePool.load(session_dir / cfg.get("pool", "pool.ndjson"))
    cassette = None
    if cfg.get("cassette"):
        cassette = Cassette(
            session_dir / cfg["cassette"],
            CassetteMode(cfg.get("cassette_mode", "replay_strict")),
        )
    gateway = Gateway(backend=backend, cassette=cassette)
    return ReviewSession(
        state=state,
        pool=pool,
        gateway=gateway,
        taxonomy=taxonomy,
        threshold=cfg.get("threshold", 0.90),
        max_rounds=cfg.get("max_rounds", 3),
        batch_size=cfg.get("batch_size", 20),
        temperature=cfg.get("temperature", 0.7),
    )
