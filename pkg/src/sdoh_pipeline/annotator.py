"""Cascaded annotation: binary relevance, then one of two 7-class steps.

Step 1 decides whether a note is eviction-related (Yes/No); Yes routes to the
eviction-status annotator, No to the non-eviction annotator.  Every step
returns a label plus the chain-of-thought rationale, parsed strictly from the
model output (structured ``Label:`` lines preferred, last legal token as a
fallback).  One reprompt is allowed before a step fails as unparseable.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import CascadeError, PipelineError, UnparseableOutputError
from .gateway import CompletionRequest, Gateway
from .programs import (
    BINARY_OUTPUTS,
    EVICTION_OUTPUTS,
    NON_EVICTION_OUTPUTS,
    YES,
    PromptProgram,
    build_request,
)
from .serde import read_ndjson, write_ndjson


class Step(enum.Enum):
    BINARY = "binary"
    EVICTION = "eviction"
    NON_EVICTION = "non_eviction"


STEP_OUTPUTS: dict[Step, tuple[str, ...]] = {
    Step.BINARY: BINARY_OUTPUTS,
    Step.EVICTION: EVICTION_OUTPUTS,
    Step.NON_EVICTION: NON_EVICTION_OUTPUTS,
}


@dataclass
class AnnotationResult:
    step: Step | None
    label: str
    rationale: str
    raw_output: str
    run_index: int = 0


_LABEL_LINE_RE = re.compile(r"^[ \t]*label[ \t]*:[ \t]*(.+)$", re.IGNORECASE | re.MULTILINE)
_REASONING_LINE_RE = re.compile(
    r"^[ \t]*(?:reasoning|rationale)[ \t]*:[ \t]*(.*)$", re.IGNORECASE | re.MULTILINE
)


def _find_tokens(text: str, legal_labels: Sequence[str]) -> list[tuple[int, str]]:
    """(position, token) pairs for every word-bounded legal token occurrence."""
    hits: list[tuple[int, str]] = []
    for token in legal_labels:
        for m in re.finditer(rf"\b{re.escape(token)}\b", text):
            hits.append((m.start(), token))
    hits.sort()
    return hits


def parse_annotation_output(
    raw: str, legal_labels: Sequence[str]
) -> tuple[str, str]:
    """Extract (label, rationale) from model output.

    Preference order: a ``Label:`` line whose value holds a legal token (the
    last such line wins), otherwise the last legal token anywhere in the text.
    Chain-of-thought text often names several candidates before concluding,
    hence last-token-wins.  Raises when no legal token occurs at all.
    """
    label_lines = list(_LABEL_LINE_RE.finditer(raw))
    for m in reversed(label_lines):
        hits = _find_tokens(m.group(1), legal_labels)
        if hits:
            label = hits[-1][1]
            reasoning = _REASONING_LINE_RE.search(raw)
            if reasoning is not None:
                # Rationale: from the reasoning marker up to the label line.
                start = reasoning.start(1)
                rationale = raw[start : m.start()].strip()
            else:
                rationale = raw[: m.start()].strip()
            return label, rationale
    hits = _find_tokens(raw, legal_labels)
    if hits:
        return hits[-1][1], raw.strip()
    raise UnparseableOutputError(
        f"no legal label token in output: {raw[:200]!r}"
    )


_REPROMPT = (
    "Your previous response could not be parsed. Answer again, ending with a "
    "line of the form 'Label: <token>' where <token> is exactly one of the "
    "legal labels."
)


def annotate(
    note: str,
    program: PromptProgram,
    gateway: Gateway,
    *,
    step: Step | None = None,
    temperature: float = 0.0,
    seed: int | None = None,
    run_index: int = 0,
    model_tag: str = "default",
) -> AnnotationResult:
    """Run one program on one note; at most one reprompt before failing."""
    legal = program.signature.output_labels
    request = build_request(
        program, note, temperature=temperature, seed=seed, model_tag=model_tag
    )
    raw = gateway.complete(request)
    try:
        label, rationale = parse_annotation_output(raw, legal)
    except UnparseableOutputError:
        retry = CompletionRequest(
            messages=request.messages
            + (("assistant", raw), ("user", _REPROMPT)),
            temperature=temperature,
            seed=seed,
            max_tokens=request.max_tokens,
            model_tag=model_tag,
        )
        raw = gateway.complete(retry)
        label, rationale = parse_annotation_output(raw, legal)
    return AnnotationResult(
        step=step, label=label, rationale=rationale, raw_output=raw, run_index=run_index
    )


def _step_annotate(
    step: Step,
    note: str,
    program: PromptProgram,
    gateway: Gateway,
    **kwargs,
) -> AnnotationResult:
    expected = STEP_OUTPUTS[step]
    if tuple(program.signature.output_labels) != expected:
        raise CascadeError(
            f"program signature does not match step {step.value}: "
            f"{program.signature.output_labels}"
        )
    return annotate(note, program, gateway, step=step, **kwargs)


def annotate_binary(note, program, gateway, **kwargs) -> AnnotationResult:
    return _step_annotate(Step.BINARY, note, program, gateway, **kwargs)


def annotate_eviction(note, program, gateway, **kwargs) -> AnnotationResult:
    return _step_annotate(Step.EVICTION, note, program, gateway, **kwargs)


def annotate_non_eviction(note, program, gateway, **kwargs) -> AnnotationResult:
    return _step_annotate(Step.NON_EVICTION, note, program, gateway, **kwargs)


@dataclass
class CascadePrograms:
    binary: PromptProgram
    eviction: PromptProgram
    non_eviction: PromptProgram


@dataclass
class CascadeTrace:
    note_id: str
    step1: AnnotationResult | None
    step2_or_3: AnnotationResult | None
    final_label: str | None

    def to_row(self, program_version: int = 0) -> dict:
        return {
            "note_id": self.note_id,
            "step1_label": self.step1.label if self.step1 else None,
            "step1_rationale": self.step1.rationale if self.step1 else None,
            "final_label": self.final_label,
            "final_rationale": self.step2_or_3.rationale if self.step2_or_3 else None,
            "run_index": self.step1.run_index if self.step1 else 0,
            "program_version": program_version,
        }


def annotate_cascade(
    note: str,
    note_id: str,
    programs: CascadePrograms,
    gateway: Gateway,
    *,
    temperature: float = 0.0,
    seed: int | None = None,
    run_index: int = 0,
) -> CascadeTrace:
    """Step 1, then exactly one of step 2 / step 3 by routing.

    Step failures raise :class:`CascadeError` with the partial trace attached.
    """
    trace = CascadeTrace(note_id=note_id, step1=None, step2_or_3=None, final_label=None)
    try:
        trace.step1 = annotate_binary(
            note,
            programs.binary,
            gateway,
            temperature=temperature,
            seed=seed,
            run_index=run_index,
        )
    except PipelineError as exc:
        raise CascadeError(f"step 1 failed: {exc}", trace=trace) from exc
    second_program = (
        programs.eviction if trace.step1.label == YES else programs.non_eviction
    )
    second_step = Step.EVICTION if trace.step1.label == YES else Step.NON_EVICTION
    try:
        trace.step2_or_3 = _step_annotate(
            second_step,
            note,
            second_program,
            gateway,
            temperature=temperature,
            seed=seed,
            run_index=run_index,
        )
    except PipelineError as exc:
        raise CascadeError(f"step 2/3 failed: {exc}", trace=trace) from exc
    trace.final_label = trace.step2_or_3.label
    return trace


def save_traces(path, traces: Iterable[CascadeTrace], program_version: int = 0) -> int:
    return write_ndjson(path, (t.to_row(program_version) for t in traces))


def load_trace_rows(path) -> list[dict]:
    return list(read_ndjson(path))
