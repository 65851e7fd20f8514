"""Raw-note intake: social-history extraction, keyword routing, note pool.

Discharge notes enter as newline-delimited records (``id``, ``text``,
``source``).  The social-history section is carved out of the full text, a
keyword table routes notes toward candidate SDoH categories, and a small
state machine (available / in_use / consumed) tracks which raw notes the
augmenter currently holds so discarded cases can go back to the pool.
"""

from __future__ import annotations

import enum
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, InvalidStateError, PoolExhaustedError
from .serde import read_ndjson, write_ndjson
from .taxonomy import (
    DEFAULT_TAXONOMY,
    SdohLabel,
    Taxonomy,
)

NOTE_SOURCES = ("mimic_like", "pmc_like", "user")

_SOCIAL_HISTORY_RE = re.compile(r"social\s+history\s*:?", re.IGNORECASE)
# A section header starts a line: capitalized word(s) followed by a colon.
_SECTION_HEADER_RE = re.compile(r"^[A-Z][A-Za-z ]{2,40}:", re.MULTILINE)
# Two consecutive blank lines also end a section.
_DOUBLE_BLANK_RE = re.compile(r"\n[ \t]*\n[ \t]*\n")


def extract_social_history(full_text: str) -> str | None:
    """Return the text of the first social-history section, or None.

    The section runs from the first case-insensitive ``social history``
    header (optional trailing colon) to the next section header or two
    consecutive blank lines.  The result is always a contiguous substring of
    the input (modulo edge whitespace stripping).
    """
    m = _SOCIAL_HISTORY_RE.search(full_text)
    if m is None:
        return None
    tail = full_text[m.end():]
    end = len(tail)
    header = _SECTION_HEADER_RE.search(tail)
    if header is not None:
        end = min(end, header.start())
    blank = _DOUBLE_BLANK_RE.search(tail)
    if blank is not None:
        end = min(end, blank.start())
    return tail[:end].strip()


def _normalize(text: str) -> str:
    return " ".join(text.split()).lower()


#: Keyword phrases per non-eviction class (eviction keywords may be added as
#: an extension via config files).
DEFAULT_KEYWORDS: dict[str, tuple[str, ...]] = {
    "t1_Homelessness": (
        "homeless", "homelessness", "shelter", "transitional housing",
        "living in car", "living on streets", "couch surfing", "lacks housing",
        "no fixed residence", "no permanent home",
    ),
    "t1_InadequateHousing": (
        "inadequate housing", "structural issues", "structural problems",
        "deficiencies in plumbing", "heating problems", "no heating",
        "electrical problems", "lack of running water", "broken toilet",
        "no toilet", "no kitchen", "cramped apartment", "overcrowded",
        "unsafe housing", "unsanitary living", "polluted environment",
        "lead exposure", "toxic exposure", "mold",
    ),
    "t1_LackOfAdequateFood": (
        "food insecurity", "limited access to food", "insufficient food",
        "lacks variety", "lacks nutrients", "no supermarkets",
        "difficult to access food", "unstable food sources",
        "cannot afford food", "malnutrition", "undernourished",
        "skipping meals", "reliance on food assistance",
    ),
    "t2_FinancialInsecurity": (
        "financial insecurity", "economic insecurity", "financial concerns",
        "financial stress", "financial burden", "affordability issues",
        "rising living costs", "difficulty covering expenses",
        "budget difficulties", "lacks financial literacy", "no stable income",
        "debt", "financial hardship",
    ),
    "t2_HousingInstability": (
        "housing instability", "difficulty paying rent", "frequent moves",
        "multiple moves", "families sharing housing",
    ),
    "t2_MaterialHardship": (
        "material hardship", "difficulty meeting basic needs",
        "utilities cut off", "cannot afford clothing", "winter coats",
        "cannot afford school supplies", "cannot afford health activities",
        "limited resources for essentials", "unable to afford medications",
        "basic needs not met", "lacks essential household items",
    ),
    "t2_TransportationInsecurity": (
        "transportation insecurity", "lack of transportation",
        "no public transportation", "transportation issues",
        "cannot afford transportation fare", "long walking distances",
        "inaccessible transportation", "no car", "unreliable transportation",
        "limited mobility", "transportation costs prohibitive",
    ),
}


class KeywordTable:
    """Phrase lists per label; phrases are matched case-insensitively."""

    def __init__(self, phrases: Mapping[SdohLabel, Sequence[str]]):
        for label, plist in phrases.items():
            if not plist:
                raise ConfigError(f"label {label} maps to an empty phrase list")
            if any(not p.strip() for p in plist):
                raise ConfigError(f"label {label} has an empty phrase")
        self._phrases = {label: tuple(plist) for label, plist in phrases.items()}

    @classmethod
    def default(cls, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> "KeywordTable":
        return cls(
            {taxonomy.parse_label(tok): ph for tok, ph in DEFAULT_KEYWORDS.items()}
        )

    @classmethod
    def from_config(
        cls, path: str | Path, taxonomy: Taxonomy = DEFAULT_TAXONOMY
    ) -> "KeywordTable":
        """Load ``{"keywords": {token: [phrase, ...]}}`` from a JSON file."""
        import json

        data = json.loads(Path(path).read_text(encoding="utf-8"))
        table = data.get("keywords")
        if not isinstance(table, dict):
            raise ConfigError(f"{path}: expected a top-level 'keywords' mapping")
        return cls({taxonomy.parse_label(tok): ph for tok, ph in table.items()})

    def items(self):
        return self._phrases.items()


def keyword_scan(text: str, table: KeywordTable) -> set[SdohLabel]:
    """Labels whose phrases occur in the whitespace-normalized text.

    Phrases of five characters or fewer only match at word boundaries, so
    e.g. "mold" does not fire inside "remodeled".
    """
    norm = _normalize(text)
    hits: set[SdohLabel] = set()
    for label, phrases in table.items():
        for phrase in phrases:
            p = _normalize(phrase)
            if len(p) <= 5:
                if re.search(rf"\b{re.escape(p)}\b", norm):
                    hits.add(label)
                    break
            elif p in norm:
                hits.add(label)
                break
    return hits


class NoteState(str, enum.Enum):
    AVAILABLE = "available"
    IN_USE = "in_use"
    CONSUMED = "consumed"


@dataclass
class RawNote:
    id: str
    full_text: str
    social_history: str | None = None
    source: str = "user"
    state: NoteState = NoteState.AVAILABLE

    def __post_init__(self):
        if self.source not in NOTE_SOURCES:
            raise ConfigError(f"unknown note source {self.source!r}")
        if isinstance(self.state, str):
            self.state = NoteState(self.state)

    @property
    def text_for_augmentation(self) -> str:
        return self.social_history if self.social_history else self.full_text


class NotePool:
    """Raw-note pool with serialized state transitions.

    Draws hand notes to the augmenter (available -> in_use); returns put them
    back (in_use -> available); consumes retire them (in_use -> consumed).
    Counts are conserved across any sequence of operations.
    """

    def __init__(self, notes: Iterable[RawNote] = ()):
        self._lock = threading.Lock()
        self._notes: dict[str, RawNote] = {}
        for note in notes:
            self.add(note)

    def add(self, note: RawNote) -> None:
        with self._lock:
            if note.id in self._notes:
                raise InvalidStateError(f"duplicate note id {note.id!r}")
            self._notes[note.id] = note

    def __len__(self) -> int:
        return len(self._notes)

    def get(self, note_id: str) -> RawNote:
        try:
            return self._notes[note_id]
        except KeyError:
            raise InvalidStateError(f"unknown note id {note_id!r}") from None

    def counts(self) -> dict[str, int]:
        out = {s.value: 0 for s in NoteState}
        for note in self._notes.values():
            out[note.state.value] += 1
        return out

    def available(self) -> list[RawNote]:
        return [n for n in self._notes.values() if n.state is NoteState.AVAILABLE]

    def draw(self, n: int) -> list[RawNote]:
        """Take ``n`` available notes (insertion order) into in_use state."""
        with self._lock:
            avail = [x for x in self._notes.values() if x.state is NoteState.AVAILABLE]
            if len(avail) < n:
                raise PoolExhaustedError(
                    f"requested {n} notes but only {len(avail)} available"
                )
            drawn = avail[:n]
            for note in drawn:
                note.state = NoteState.IN_USE
            return drawn

    def return_note(self, note_id: str) -> None:
        """in_use -> available; double returns are an error."""
        with self._lock:
            note = self.get(note_id)
            if note.state is not NoteState.IN_USE:
                raise InvalidStateError(
                    f"cannot return note {note_id!r} in state {note.state.value}"
                )
            note.state = NoteState.AVAILABLE

    def consume(self, note_id: str) -> None:
        """in_use -> consumed (its derived record was accepted)."""
        with self._lock:
            note = self.get(note_id)
            if note.state is not NoteState.IN_USE:
                raise InvalidStateError(
                    f"cannot consume note {note_id!r} in state {note.state.value}"
                )
            note.state = NoteState.CONSUMED

    # -- persistence ----------------------------------------------------------

    def to_rows(self) -> list[dict]:
        return [
            {
                "id": n.id,
                "full_text": n.full_text,
                "social_history": n.social_history,
                "source": n.source,
                "state": n.state.value,
            }
            for n in self._notes.values()
        ]

    def save(self, path: str | Path) -> None:
        write_ndjson(path, self.to_rows())

    @classmethod
    def load(cls, path: str | Path) -> "NotePool":
        return cls(RawNote(**row) for row in read_ndjson(path))


def ingest_notes(
    rows: Iterable[dict], *, extract: bool = True
) -> NotePool:
    """Build a pool from raw record dicts (``id``, ``text``, ``source``)."""
    pool = NotePool()
    for row in rows:
        try:
            note_id, text = row["id"], row["text"]
        except KeyError as exc:
            raise ConfigError(f"raw note record missing field {exc}") from None
        pool.add(
            RawNote(
                id=str(note_id),
                full_text=text,
                social_history=extract_social_history(text) if extract else None,
                source=row.get("source", "user"),
            )
        )
    return pool


def ingest_file(path: str | Path, *, extract: bool = True) -> NotePool:
    return ingest_notes(read_ndjson(path), extract=extract)
