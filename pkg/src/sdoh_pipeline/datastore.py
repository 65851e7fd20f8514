"""Labeled-record persistence, split planning, mixing, and SFT exports.

Records live in newline-delimited files with a fixed schema.  Split plans
target per-(label, split, source) counts; the default plan pins the standard
dataset shape: 8 train / 12 dev examples per label from synthetic notes, a
48-example test row per label (20 synth + 20 mimic + 8 pmc) except for the
two synthetic-only classes, and fine-tuning totals of 5000 eviction / 3000
non-eviction examples.
"""

from __future__ import annotations

import hashlib
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    ConfigError,
    InsufficientRealRecordsError,
    MissingRationaleError,
    NegativeCountError,
)
from .serde import digest, read_ndjson, write_ndjson
from .taxonomy import ALL_LABELS, EVICTION_LABELS, NON_EVICTION_LABELS

SOURCES = ("synth", "mimic", "pmc")
SPLITS = ("dspy_train", "dspy_eval", "sft", "test")
PROVENANCE = ("AcceptedAsRequired", "AcceptedAsAnnotated", "human")

_LABEL_TOKENS = {lab.canonical_name for lab in ALL_LABELS}


def record_id(text: str, label: str, source: str) -> str:
    """Content-addressed id: identical content dedupes deterministically."""
    h = hashlib.sha256(f"{source}\x1f{label}\x1f{text}".encode("utf-8"))
    return h.hexdigest()[:16]


@dataclass
class Record:
    id: str
    text: str
    label: str
    source: str
    split: str
    rationale: str | None = None
    decision_provenance: str | None = None

    def __post_init__(self):
        if self.label not in _LABEL_TOKENS:
            raise ConfigError(f"record label {self.label!r} is not a gold class token")
        if self.source not in SOURCES:
            raise ConfigError(f"record source {self.source!r} not in {SOURCES}")
        if self.split not in SPLITS:
            raise ConfigError(f"record split {self.split!r} not in {SPLITS}")
        if self.decision_provenance is not None and self.decision_provenance not in PROVENANCE:
            raise ConfigError(
                f"decision provenance {self.decision_provenance!r} not in {PROVENANCE}"
            )

    @classmethod
    def create(
        cls,
        text: str,
        label: str,
        source: str,
        split: str,
        *,
        rationale: str | None = None,
        decision_provenance: str | None = None,
    ) -> "Record":
        return cls(
            id=record_id(text, label, source),
            text=text,
            label=label,
            source=source,
            split=split,
            rationale=rationale,
            decision_provenance=decision_provenance,
        )

    def to_row(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "label": self.label,
            "source": self.source,
            "split": self.split,
            "rationale": self.rationale,
            "decision_provenance": self.decision_provenance,
        }

    @classmethod
    def from_row(cls, row: dict) -> "Record":
        return cls(
            id=row["id"],
            text=row["text"],
            label=row["label"],
            source=row["source"],
            split=row["split"],
            rationale=row.get("rationale"),
            decision_provenance=row.get("decision_provenance"),
        )


def save_records(path: str | Path, records: Iterable[Record]) -> int:
    return write_ndjson(path, (r.to_row() for r in records))


def load_records(path: str | Path) -> list[Record]:
    return [Record.from_row(row) for row in read_ndjson(path)]


# -- split planning -------------------------------------------------------------

PlanKey = tuple[str, str, str]  # (label token, split, source)


@dataclass
class SplitPlan:
    counts: dict[PlanKey, int] = field(default_factory=dict)

    def count(self, label: str, split: str, source: str) -> int:
        return self.counts.get((label, split, source), 0)

    def total(
        self,
        *,
        label: str | None = None,
        split: str | None = None,
        source: str | None = None,
    ) -> int:
        return sum(
            n
            for (lab, sp, src), n in self.counts.items()
            if (label is None or lab == label)
            and (split is None or sp == split)
            and (source is None or src == source)
        )

    def test_row(self, label: str) -> tuple[int, int, int]:
        """(synth, mimic, pmc) test targets for one label."""
        return tuple(self.count(label, "test", src) for src in SOURCES)

    def digest(self) -> str:
        return digest(
            sorted((list(k), v) for k, v in self.counts.items())
        )


#: Per-label SFT totals (all synthetic): the eviction side sums to 5000 and
#: the non-eviction side to 3000.
_SFT_TARGETS = {
    "t3_Eviction_absent": 500,
    "t3_Eviction_hypothetical": 750,
    "t3_Eviction_mr_current": 750,
    "t3_Eviction_mr_history": 750,
    "t3_Eviction_pending": 750,
    "t3_Eviction_present_current": 750,
    "t3_Eviction_present_history": 750,
    "t1_Homelessness": 450,
    "t1_InadequateHousing": 450,
    "t1_LackOfAdequateFood": 450,
    "t2_FinancialInsecurity": 450,
    "t2_HousingInstability": 450,
    "t2_MaterialHardship": 450,
    "t2_TransportationInsecurity": 300,
}

#: Labels whose test rows are synthetic-only (no real-source examples).
_SYNTH_ONLY_TEST = {"t3_Eviction_absent", "t1_Homelessness"}


def build_split_plan(
    overrides: Mapping[PlanKey, int] | None = None,
    *,
    dspy_train_per_label: int = 8,
    dspy_eval_per_label: int = 12,
) -> SplitPlan:
    """Default dataset plan, optionally overridden per (label, split, source).

    ``dspy_eval_per_label`` defaults to 12; pass 48 for the larger
    dev-set preset.
    """
    counts: dict[PlanKey, int] = {}
    for lab in ALL_LABELS:
        token = lab.canonical_name
        counts[(token, "dspy_train", "synth")] = dspy_train_per_label
        counts[(token, "dspy_eval", "synth")] = dspy_eval_per_label
        counts[(token, "sft", "synth")] = _SFT_TARGETS[token]
        counts[(token, "test", "synth")] = 20
        if token not in _SYNTH_ONLY_TEST:
            counts[(token, "test", "mimic")] = 20
            counts[(token, "test", "pmc")] = 8
    for key, value in (overrides or {}).items():
        if value < 0:
            raise NegativeCountError(f"override {key} has negative count {value}")
        counts[tuple(key)] = value
    return SplitPlan(counts)


SFT_SIZE_PRESETS = (200, 1000, 3000, 5000, 10000)


def scaled_sft_counts(task: str, total: int) -> dict[str, int]:
    """Per-label targets proportional to the default SFT shares, summing to
    exactly ``total``; ``task`` is ``eviction`` or ``non_eviction``."""
    if total < 0:
        raise NegativeCountError(f"total {total} is negative")
    labels = EVICTION_LABELS if task == "eviction" else NON_EVICTION_LABELS
    base = {lab.canonical_name: _SFT_TARGETS[lab.canonical_name] for lab in labels}
    base_total = sum(base.values())
    raw = {tok: total * n / base_total for tok, n in base.items()}
    counts = {tok: math.floor(x) for tok, x in raw.items()}
    remainder = total - sum(counts.values())
    # Largest fractional remainders get the leftover units (ties by token).
    order = sorted(raw, key=lambda tok: (-(raw[tok] - counts[tok]), tok))
    for tok in order[:remainder]:
        counts[tok] += 1
    return counts


# -- composition mixing -----------------------------------------------------------


def mix_composition(
    synth_records: Sequence[Record],
    real_records: Sequence[Record],
    real_fraction: float,
    seed: int,
    *,
    target: int | None = None,
) -> list[Record]:
    """Seeded sample without replacement: ``target`` records, a ceil'd
    ``real_fraction`` of them real, the rest synthetic.

    ``target`` defaults to the synthetic count, matching the "replace X% of
    the synthetic training data with real notes" protocol.
    """
    if not 0.0 <= real_fraction <= 1.0:
        raise ConfigError(f"real_fraction {real_fraction} outside [0, 1]")
    if target is None:
        target = len(synth_records)
    n_real = math.ceil(real_fraction * target)
    if n_real > len(real_records):
        raise InsufficientRealRecordsError(
            f"need {n_real} real records, have {len(real_records)}"
        )
    n_synth = target - n_real
    if n_synth > len(synth_records):
        raise ConfigError(
            f"need {n_synth} synthetic records, have {len(synth_records)}"
        )
    rng = random.Random(seed)
    mixed = rng.sample(list(synth_records), n_synth) + rng.sample(
        list(real_records), n_real
    )
    rng.shuffle(mixed)
    return mixed


# -- fine-tuning exports -----------------------------------------------------------

SFT_SYSTEM_PROMPT = (
    "You are a healthcare annotator specializing in social determinants of "
    "health, with a focus on eviction-related content. Read the patient "
    "social-history note and respond with the single most appropriate label."
)


def export_sft(
    records: Sequence[Record],
    with_reasoning: bool,
    path: str | Path | None = None,
) -> list[dict]:
    """Chat-format rows for supervised fine-tuning.

    Both variants carry identical (id, note, label) triples; the reasoning
    variant prepends each record's rationale to the assistant turn.
    """
    rows = []
    for rec in records:
        if with_reasoning:
            if not (rec.rationale or "").strip():
                raise MissingRationaleError(
                    f"record {rec.id} has no rationale for a reasoning export"
                )
            assistant = f"{rec.rationale}\nLabel: {rec.label}"
        else:
            assistant = rec.label
        rows.append(
            {
                "id": rec.id,
                "label": rec.label,
                "messages": [
                    {"role": "system", "content": SFT_SYSTEM_PROMPT},
                    {"role": "user", "content": rec.text},
                    {"role": "assistant", "content": assistant},
                ],
            }
        )
    if path is not None:
        write_ndjson(path, rows)
    return rows


def export_manifest(
    records: Sequence[Record],
    *,
    with_reasoning: bool,
    seed: int | None = None,
    composition: dict | None = None,
    plan: SplitPlan | None = None,
) -> dict:
    label_counts = Counter(r.label for r in records)
    source_counts = Counter(r.source for r in records)
    return {
        "n_records": len(records),
        "with_reasoning": with_reasoning,
        "label_counts": dict(sorted(label_counts.items())),
        "source_counts": dict(sorted(source_counts.items())),
        "seed": seed,
        "composition": composition,
        "plan_digest": plan.digest() if plan else None,
    }


# -- statistics ----------------------------------------------------------------


@dataclass
class StatsTable:
    counts: dict[PlanKey, int]
    duplicate_ids: tuple[str, ...]

    def count(self, label: str, split: str, source: str) -> int:
        return self.counts.get((label, split, source), 0)


def stats(records: Sequence[Record]) -> StatsTable:
    """Per-(label, split, source) counts; duplicate ids count once, flagged."""
    seen: set[str] = set()
    dupes: list[str] = []
    counts: Counter[PlanKey] = Counter()
    for rec in records:
        if rec.id in seen:
            dupes.append(rec.id)
            continue
        seen.add(rec.id)
        counts[(rec.label, rec.split, rec.source)] += 1
    return StatsTable(counts=dict(counts), duplicate_ids=tuple(dupes))
