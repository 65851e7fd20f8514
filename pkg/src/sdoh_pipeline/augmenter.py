"""Per-label note augmentation with human verdicts and prompt refinement.

One augmenter owns one target label.  Each round it rewrites a batch of raw
notes toward that label, collects human True/False verdicts (False requires
feedback), and computes batch accuracy.  At or above the threshold (default
0.90) the loop stops; below it, the failures and their feedback drive one
model call that revises the generation prompt, and the next round begins.
Accepted notes accumulate across rounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import (
    AlreadyVerdictedError,
    EmptyRawNoteError,
    IncompleteVerdictsError,
    InvalidRevisionError,
    MissingFeedbackError,
    PipelineError,
    ThresholdNotReachedError,
    UnknownItemError,
)
from .gateway import CompletionRequest, Gateway
from .ingest import NotePool, RawNote
from .serde import write_ndjson
from .taxonomy import DEFAULT_TAXONOMY, LabelDefinition, SdohLabel, Taxonomy

PLACEHOLDERS = ("{raw_notes}", "{label}", "{definition}")

DEFAULT_AUGMENT_PROMPT = """You are tasked with rewriting the raw notes to become related to some SDoH label.
Here is the raw note: {raw_notes}
And the specific label: {label}
The definition of the label: {definition}
Note:
1. Do NOT include the definitions or examples provided in your rewritten content.
2. Focus exclusively on the social history, disregarding sentences related to family history or other topics.
3. The augmented notes should clearly reflect the label context, be contextually coherent, with varied and diverse expressions.
4. The augmented note should be a detailed description of a specific patient case that illustrates the application of the SDoH label. Focus on the unique circumstances, events, and actions related to this individual case. Avoid using general or broad descriptions of processes or procedures; instead, provide concrete details and examples that are directly relevant to the patient's situation.
5. Your output should not exceed 100 words.
Augmented Notes:"""

DEFAULT_META_PROMPT = """You are refining a prompt that rewrites clinical raw notes to reflect one SDoH label.

Current prompt:
---
{current_prompt}
---

Reviewers rejected these outputs produced by the current prompt:
{failures}

Revise the prompt so future outputs avoid these mistakes. Keep the placeholders {raw_notes}, {label} and {definition} exactly as written, each appearing exactly once, and keep the output length constraint. Reply with the revised prompt only."""


def _substitute(template: str, mapping: dict[str, str]) -> str:
    # str.replace instead of str.format: definition text may contain braces.
    out = template
    for key, value in mapping.items():
        out = out.replace(key, value)
    return out


def validate_template(template: str) -> None:
    """Every placeholder must appear exactly once."""
    for ph in PLACEHOLDERS:
        if template.count(ph) != 1:
            raise InvalidRevisionError(
                f"template must contain {ph} exactly once "
                f"(found {template.count(ph)})"
            )


def render_augment_prompt(
    raw_note: str,
    label: SdohLabel,
    definition: LabelDefinition,
    *,
    template: str = DEFAULT_AUGMENT_PROMPT,
) -> str:
    """Fill the generation template with note text, label token, definition."""
    if not raw_note.strip():
        raise EmptyRawNoteError("raw note text is empty")
    validate_template(template)
    return _substitute(
        template,
        {
            "{raw_notes}": raw_note,
            "{label}": label.canonical_name,
            "{definition}": definition.definition_text,
        },
    )


@dataclass
class Verdict:
    passed: bool
    feedback: str | None = None


@dataclass
class BatchItem:
    item_id: str
    source_raw_note_id: str
    generated_text: str
    verdict: Verdict | None = None
    failed: bool = False
    error: str | None = None


@dataclass
class AugmentationBatch:
    batch_id: str
    label: SdohLabel
    items: list[BatchItem] = field(default_factory=list)

    def item(self, item_id: str) -> BatchItem:
        for it in self.items:
            if it.item_id == item_id:
                return it
        raise UnknownItemError(f"no item {item_id!r} in batch {self.batch_id}")

    def live_items(self) -> list[BatchItem]:
        return [it for it in self.items if not it.failed]

    def to_rows(self) -> list[dict]:
        return [
            {
                "batch_id": self.batch_id,
                "item_id": it.item_id,
                "label": self.label.canonical_name,
                "source_raw_note_id": it.source_raw_note_id,
                "generated_text": it.generated_text,
                "failed": it.failed,
                "error": it.error,
                "verdict": None
                if it.verdict is None
                else {"passed": it.verdict.passed, "feedback": it.verdict.feedback},
            }
            for it in self.items
        ]

    def save(self, path) -> None:
        write_ndjson(path, self.to_rows())


@dataclass
class RoundOutcome:
    accuracy: float
    accepted_ids: tuple[str, ...]
    feedback_items: tuple[tuple[str, str], ...]  # (generated_text, feedback)
    prompt: str


@dataclass
class AugmenterState:
    label: SdohLabel
    current_prompt: str = DEFAULT_AUGMENT_PROMPT
    round_index: int = 0
    history: list[RoundOutcome] = field(default_factory=list)

    def __post_init__(self):
        validate_template(self.current_prompt)


def generate_batch(
    state: AugmenterState,
    raw_notes: Sequence[RawNote],
    gateway: Gateway,
    *,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
    temperature: float = 0.7,
    model_tag: str = "default",
) -> AugmentationBatch:
    """One generated note per raw note; gateway failures mark the item failed
    (failed items never enter the accuracy denominator)."""
    if not raw_notes:
        raise ValueError("raw_notes must be non-empty")
    definition = taxonomy.definition_of(state.label)
    batch_id = f"{state.label.canonical_name}-round{state.round_index}"
    batch = AugmentationBatch(batch_id=batch_id, label=state.label)
    for i, note in enumerate(raw_notes):
        item_id = f"{batch_id}-{i:03d}"  # no slashes: ids are URL path segments
        try:
            prompt = render_augment_prompt(
                note.text_for_augmentation,
                state.label,
                definition,
                template=state.current_prompt,
            )
            text = gateway.complete(
                CompletionRequest(
                    messages=(("user", prompt),),
                    temperature=temperature,
                    model_tag=model_tag,
                )
            )
            batch.items.append(BatchItem(item_id, note.id, text))
        except PipelineError as exc:
            batch.items.append(
                BatchItem(
                    item_id,
                    note.id,
                    generated_text="",
                    failed=True,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
    return batch


def record_verdict(
    batch: AugmentationBatch,
    item_id: str,
    passed: bool,
    feedback: str | None = None,
) -> BatchItem:
    """Store one immutable verdict; False verdicts must carry feedback."""
    item = batch.item(item_id)
    if item.verdict is not None:
        raise AlreadyVerdictedError(f"item {item_id!r} already has a verdict")
    if not passed and not (feedback or "").strip():
        raise MissingFeedbackError(f"False verdict on {item_id!r} needs feedback")
    item.verdict = Verdict(passed=passed, feedback=feedback)
    return item


def batch_accuracy(batch: AugmentationBatch) -> float:
    """(# passed) / (# verdicted) over non-failed items; all must be verdicted."""
    live = batch.live_items()
    pending = [it.item_id for it in live if it.verdict is None]
    if pending:
        raise IncompleteVerdictsError(
            f"{len(pending)} items still unverdicted (e.g. {pending[0]!r})"
        )
    if not live:
        raise ValueError("batch has no verdicted items")
    passed = sum(1 for it in live if it.verdict.passed)
    return passed / len(live)


def _render_failures(feedback_items: Sequence[tuple[str, str]]) -> str:
    lines = []
    for i, (text, feedback) in enumerate(feedback_items, start=1):
        lines.append(f"{i}. Output: {text}\n   Feedback: {feedback}")
    return "\n".join(lines)


def optimize_prompt(
    state: AugmenterState,
    gateway: Gateway,
    *,
    meta_template: str = DEFAULT_META_PROMPT,
    temperature: float = 0.3,
    model_tag: str = "default",
) -> str:
    """One model call that revises the prompt from the latest round's feedback.

    The revision must keep all three placeholders; one retry is allowed, then
    the round fails with ``InvalidRevisionError``.
    """
    if not state.history:
        raise ValueError("no completed round to optimize from")
    last = state.history[-1]
    if not last.feedback_items:
        raise ValueError("latest round has no feedback items")
    meta = _substitute(
        meta_template,
        {
            "{current_prompt}": state.current_prompt,
            "{failures}": _render_failures(last.feedback_items),
        },
    )
    request = CompletionRequest(
        messages=(("user", meta),), temperature=temperature, model_tag=model_tag
    )
    for attempt in range(2):
        revised = gateway.complete(request)
        try:
            validate_template(revised)
            return revised
        except InvalidRevisionError:
            if attempt == 1:
                raise
            request = CompletionRequest(
                messages=request.messages
                + (
                    ("assistant", revised),
                    (
                        "user",
                        "The revised prompt dropped a required placeholder. "
                        "Produce it again with {raw_notes}, {label} and "
                        "{definition} each appearing exactly once.",
                    ),
                ),
                temperature=temperature,
                model_tag=model_tag,
            )
    raise AssertionError("unreachable")


def history_rows(state: AugmenterState) -> list[dict]:
    """Audit export: one row per completed round."""
    return [
        {
            "label": state.label.canonical_name,
            "round_index": i,
            "accuracy": outcome.accuracy,
            "accepted_ids": list(outcome.accepted_ids),
            "n_feedback": len(outcome.feedback_items),
            "feedback": [
                {"generated_text": text, "feedback": fb}
                for text, fb in outcome.feedback_items
            ],
            "prompt": outcome.prompt,
        }
        for i, outcome in enumerate(state.history)
    ]


def save_history(path, state: AugmenterState) -> int:
    return write_ndjson(path, history_rows(state))


VerdictProvider = Callable[[AugmentationBatch], None]


def close_round(
    state: AugmenterState,
    batch: AugmentationBatch,
    pool: NotePool | None = None,
) -> RoundOutcome:
    """Fold a fully verdicted batch into the state and settle pool states.

    Accepted items consume their source notes; rejected and failed items
    return them to the pool for future rounds.
    """
    accuracy = batch_accuracy(batch)
    accepted = [it for it in batch.live_items() if it.verdict.passed]
    rejected = [it for it in batch.live_items() if not it.verdict.passed]
    failed = [it for it in batch.items if it.failed]
    if pool is not None:
        for it in accepted:
            pool.consume(it.source_raw_note_id)
        for it in rejected + failed:
            pool.return_note(it.source_raw_note_id)
    outcome = RoundOutcome(
        accuracy=accuracy,
        accepted_ids=tuple(it.item_id for it in accepted),
        feedback_items=tuple(
            (it.generated_text, it.verdict.feedback or "") for it in rejected
        ),
        prompt=state.current_prompt,
    )
    state.history.append(outcome)
    state.round_index += 1
    return outcome


def run_until_threshold(
    state: AugmenterState,
    pool: NotePool,
    gateway: Gateway,
    verdict_provider: VerdictProvider,
    *,
    threshold: float = 0.90,
    max_rounds: int = 3,
    batch_size: int = 20,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
    temperature: float = 0.7,
) -> tuple[AugmenterState, list[BatchItem]]:
    """Generate -> verdict -> accuracy loop, revising the prompt between rounds.

    Stops at the first round whose accuracy reaches the threshold; accepted
    items from every round accumulate in the result.  If ``max_rounds`` pass
    below threshold, raises ``ThresholdNotReachedError`` carrying the state
    and the accepted notes so far.
    """
    accepted: list[BatchItem] = []
    while True:
        notes = pool.draw(batch_size)
        batch = generate_batch(
            state, notes, gateway, taxonomy=taxonomy, temperature=temperature
        )
        verdict_provider(batch)
        outcome = close_round(state, batch, pool)
        accepted.extend(
            it for it in batch.live_items() if it.item_id in outcome.accepted_ids
        )
        if outcome.accuracy >= threshold:
            return state, accepted
        if state.round_index >= max_rounds:
            raise ThresholdNotReachedError(
                f"accuracy {outcome.accuracy:.2f} after {max_rounds} rounds "
                f"(threshold {threshold})",
                state=state,
                accepted=accepted,
            )
        state.current_prompt = optimize_prompt(state, gateway)
