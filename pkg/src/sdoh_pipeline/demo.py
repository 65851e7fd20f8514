"""Deterministic offline backend and fixture builders.

The demo backend is a scripted :class:`MockBackend` that plays every role in
the pipeline from pure functions of the request: it rewrites raw notes to
embed a per-label cue phrase, annotates notes by spotting those cues, and
revises prompts by echoing them with a note appended.  Recording a cassette
against it yields a corpus the whole pipeline can replay without any model
or network, which is how the bundled end-to-end tests and the review-UI
fixture work.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

from . import augmenter
from .gateway import Cassette, CassetteMode, CompletionRequest, Gateway, MockBackend
from .ingest import NotePool, RawNote, extract_social_history
from .serde import write_ndjson
from .taxonomy import DEFAULT_TAXONOMY, EVICTION_LABELS, NON_EVICTION_LABELS

#: One unambiguous cue phrase per label; generated notes embed these and the
#: demo annotator detects them.
CUES: dict[str, str] = {
    "t1_Homelessness": "has been homeless and sleeps at a shelter downtown",
    "t1_InadequateHousing": "apartment has no working heat and exposed wiring",
    "t1_LackOfAdequateFood": "relies on a food pantry and often skips meals",
    "t2_FinancialInsecurity": "lost his job and is anxious about mounting debt",
    "t2_HousingInstability": "moved three times this year and is behind on rent",
    "t2_MaterialHardship": "cannot afford medications after the electricity was cut off",
    "t2_TransportationInsecurity": "has no car and misses appointments without bus fare",
    "t3_Eviction_absent": "has never been evicted and keeps a stable lease",
    "t3_Eviction_present_history": "was evicted from an apartment several years ago",
    "t3_Eviction_present_current": "was evicted from her rental home last month",
    "t3_Eviction_pending": "received an eviction notice and the court case is still pending",
    "t3_Eviction_hypothetical": "faces a landlord threatening eviction next month over unpaid rent",
    "t3_Eviction_mr_history": "settled an eviction filing years ago through mutual lease rescission",
    "t3_Eviction_mr_current": "signed a mutual rescission with the landlord a few weeks ago",
}

_EVICTION_TOKENS = tuple(lab.canonical_name for lab in EVICTION_LABELS)
_NON_EVICTION_TOKENS = tuple(lab.canonical_name for lab in NON_EVICTION_LABELS)

_LABEL_LINE = re.compile(r"And the specific label: (\S+)")
_RAW_NOTE_LINE = re.compile(r"Here is the raw note: (.*?)\nAnd the specific label:", re.DOTALL)
_TARGET_NOTE = re.compile(r"Note: (.*)\Z", re.DOTALL)


def _last_user(request: CompletionRequest) -> str:
    for role, content in reversed(request.messages):
        if role == "user":
            return content
    return ""


def _all_text(request: CompletionRequest) -> str:
    return "\n".join(content for _, content in request.messages)


def _augment_reply(request: CompletionRequest) -> str:
    text = _last_user(request)
    label = _LABEL_LINE.search(text).group(1)
    raw = _RAW_NOTE_LINE.search(text)
    # Reference the source note only through a digest: quoting its text would
    # leak the source note's own cue into the rewrite and confuse routing.
    case = hashlib.sha1((raw.group(1) if raw else "").encode("utf-8")).hexdigest()[:8]
    return (
        f"The patient {CUES[label]}. Details rewritten from prior "
        f"documentation (case {case}). The care team flagged this for "
        f"social-work follow-up."
    )


def _detect(note: str, tokens: tuple[str, ...]) -> str:
    for token in tokens:
        if CUES[token] in note:
            return token
    return "Other"


def _note_from_request(request: CompletionRequest) -> str:
    m = _TARGET_NOTE.search(_last_user(request))
    return m.group(1) if m else _last_user(request)


def _binary_reply(request: CompletionRequest) -> str:
    note = _note_from_request(request)
    related = _detect(note, _EVICTION_TOKENS) != "Other" or "evict" in note.lower()
    label = "Yes" if related else "No"
    return (
        "Reasoning: I checked each sentence for eviction-related content.\n"
        f"Label: {label}"
    )


def _multiclass_reply(tokens: tuple[str, ...]):
    def reply(request: CompletionRequest) -> str:
        note = _note_from_request(request)
        label = _detect(note, tokens)
        return (
            "Reasoning: the note matches the documented pattern for this "
            f"category.\nLabel: {label}"
        )

    return reply


def _revision_reply(request: CompletionRequest) -> str:
    text = _last_user(request)
    start = text.index("---") + 4
    end = text.index("---", start)
    current = text[start:end].strip()
    return current + "\nReviewer guidance: keep the time frame of events explicit."


def demo_backend() -> MockBackend:
    """Scripted backend covering augmentation, all three steps, and revision.

    Rule order matters: a revision request quotes the whole generation
    template, so it must match before the augmentation rule does.
    """
    backend = MockBackend()
    backend.add("Revise the prompt", _revision_reply)
    backend.add("rewriting the raw notes", _augment_reply)
    backend.add('assign the label "Yes"', _binary_reply)
    backend.add("t3_Eviction_absent", _multiclass_reply(_EVICTION_TOKENS))
    backend.add("t1_Homelessness", _multiclass_reply(_NON_EVICTION_TOKENS))
    return backend


_FILLERS = (
    "Lives with a cousin. Former smoker, quit two years ago.",
    "Retired factory worker. Denies alcohol use.",
    "Works part time at a grocery store. One adult son nearby.",
    "Widowed, two cats. Occasional wine with dinner.",
)


def toy_note_rows(n: int, *, cycle_labels: bool = True) -> list[dict]:
    """Deterministic synthetic discharge notes with social-history sections."""
    tokens = list(CUES)
    rows = []
    for i in range(n):
        cue = CUES[tokens[i % len(tokens)]] if cycle_labels else _FILLERS[i % len(_FILLERS)]
        text = (
            f"Admission Note {i:03d}\n"
            "Brief Hospital Course:\nStable overnight, discharged in good condition.\n"
            "Social History:\n"
            f"Patient {cue}. {_FILLERS[i % len(_FILLERS)]}\n"
            "Family History:\nNon-contributory.\n"
        )
        rows.append(
            {
                "id": f"note-{i:04d}",
                "text": text,
                "source": ("mimic_like", "pmc_like", "user")[i % 3],
            }
        )
    return rows


def toy_pool(n: int) -> NotePool:
    pool = NotePool()
    for row in toy_note_rows(n):
        pool.add(
            RawNote(
                id=row["id"],
                full_text=row["text"],
                social_history=extract_social_history(row["text"]),
                source=row["source"],
            )
        )
    return pool


def build_review_fixture(
    fixture_dir: str | Path,
    *,
    label: str = "t3_Eviction_pending",
    batch_size: int = 20,
) -> Path:
    """Materialize a replayable review session: pool, cassette, session.json.

    The first batch's generations are recorded against the demo backend, so
    ``review-serve`` can run the session in strict replay with no backend.
    """
    fixture_dir = Path(fixture_dir)
    fixture_dir.mkdir(parents=True, exist_ok=True)
    rows = toy_note_rows(batch_size)
    write_ndjson(
        fixture_dir / "pool.ndjson",
        [
            {
                "id": r["id"],
                "full_text": r["text"],
                "social_history": extract_social_history(r["text"]),
                "source": r["source"],
                "state": "available",
            }
            for r in rows
        ],
    )
    cassette_path = fixture_dir / "cassette.ndjson"
    if cassette_path.exists():
        cassette_path.unlink()
    gateway = Gateway(
        backend=demo_backend(),
        cassette=Cassette(cassette_path, CassetteMode.RECORD),
    )
    pool = NotePool.load(fixture_dir / "pool.ndjson")
    state = augmenter.AugmenterState(label=DEFAULT_TAXONOMY.parse_label(label))
    augmenter.generate_batch(state, pool.draw(batch_size), gateway)
    (fixture_dir / "session.json").write_text(
        json.dumps(
            {
                "label": label,
                "batch_size": batch_size,
                "threshold": 0.90,
                "max_rounds": 3,
                "temperature": 0.7,
                "pool": "pool.ndjson",
                "cassette": "cassette.ndjson",
                "cassette_mode": "replay_strict",
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return fixture_dir
