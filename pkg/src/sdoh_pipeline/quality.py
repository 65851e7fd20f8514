"""Triple-pass consistency check for augmented notes.

An augmented note enters with the label it was generated for.  Pass 1 runs
the routed annotator: a match accepts the note under the required label.  On
a mismatch, two more passes run (same program and temperature, distinct
seeds); three identical labels accept the note under the *annotated* label,
anything else discards it and returns the source raw note to the pool.
There are never exactly two passes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

from .annotator import AnnotationResult
from .errors import PipelineError
from .ingest import NotePool


class Decision(str, enum.Enum):
    ACCEPTED_AS_REQUIRED = "AcceptedAsRequired"
    ACCEPTED_AS_ANNOTATED = "AcceptedAsAnnotated"
    DISCARDED = "Discarded"


@dataclass
class ValidationOutcome:
    decision: Decision
    final_label: str | None
    passes: list[AnnotationResult]


#: (note_text, seed) -> AnnotationResult; the step-2 or step-3 annotator
#: bound to its program and gateway.
AnnotateStep = Callable[[str, int], AnnotationResult]


def validate_example(
    note: str,
    required_label: str,
    annotate_step: AnnotateStep,
    pool: NotePool | None = None,
    source_note_id: str | None = None,
    *,
    seed_base: int = 0,
) -> ValidationOutcome:
    """Apply the 1-or-3-pass rule to one augmented note.

    Annotation errors count as a pass with a unique non-matching sentinel
    label, which deterministically forces the discard path.  A discard
    triggers exactly one pool return of the source raw note (when a pool and
    source id are supplied).
    """
    passes: list[AnnotationResult] = []

    def run_pass(i: int) -> str:
        try:
            result = annotate_step(note, seed_base + i)
            passes.append(result)
            return result.label
        except PipelineError as exc:
            # Unique per-pass sentinel: never equals the required label and
            # never equals another pass (even another errored one).
            sentinel = f"<error:{i}>"
            passes.append(
                AnnotationResult(
                    step=None,
                    label=sentinel,
                    rationale=f"{type(exc).__name__}: {exc}",
                    raw_output="",
                    run_index=i,
                )
            )
            return sentinel

    first = run_pass(0)
    if first == required_label:
        return ValidationOutcome(Decision.ACCEPTED_AS_REQUIRED, required_label, passes)
    second = run_pass(1)
    third = run_pass(2)
    if first == second == third:
        return ValidationOutcome(Decision.ACCEPTED_AS_ANNOTATED, first, passes)
    if pool is not None and source_note_id is not None:
        pool.return_note(source_note_id)
    return ValidationOutcome(Decision.DISCARDED, None, passes)
