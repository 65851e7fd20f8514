"""Prompt programs: an instruction, ordered demos, and an output signature.

A program is the unit the optimizer searches over and the annotator executes.
Rendering turns a program plus an input note into chat messages that ask for
step-by-step reasoning followed by exactly one label token.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .errors import ConfigError
from .gateway import CompletionRequest
from .taxonomy import (
    EVICTION_LABELS,
    NON_EVICTION_LABELS,
    OTHER_TOKEN,
)

YES = "Yes"
NO = "No"

BINARY_OUTPUTS: tuple[str, ...] = (YES, NO)
EVICTION_OUTPUTS: tuple[str, ...] = tuple(
    lab.canonical_name for lab in EVICTION_LABELS
) + (OTHER_TOKEN,)
NON_EVICTION_OUTPUTS: tuple[str, ...] = tuple(
    lab.canonical_name for lab in NON_EVICTION_LABELS
) + (OTHER_TOKEN,)


@dataclass(frozen=True)
class ProgramSignature:
    """Input/output behavior: one input field, a closed label set, a rationale."""

    input_field: str
    output_labels: tuple[str, ...]
    with_rationale: bool = True


@dataclass(frozen=True)
class Demo:
    """A worked example embedded in the prompt: note, reasoning, label."""

    note: str
    rationale: str
    label: str


@dataclass(frozen=True)
class PromptProgram:
    instruction: str
    signature: ProgramSignature
    demos: tuple[Demo, ...] = ()
    version: int = 0

    def __post_init__(self):
        for demo in self.demos:
            if demo.label not in self.signature.output_labels:
                raise ConfigError(
                    f"demo label {demo.label!r} not legal for this signature"
                )

    def with_demos(self, demos: Iterable[Demo]) -> "PromptProgram":
        return replace(self, demos=tuple(demos))


_FORMAT_HINT = (
    "Respond in exactly this format:\n"
    "Reasoning: <your step-by-step reasoning>\n"
    "Label: <one label from the list above>"
)


def render_messages(
    program: PromptProgram, note: str
) -> tuple[tuple[str, str], ...]:
    """Chat messages: system instruction, demo turns, then the target note."""
    label_list = ", ".join(f'"{tok}"' for tok in program.signature.output_labels)
    system = (
        f"{program.instruction}\n\n"
        f"Legal labels: {label_list}.\n{_FORMAT_HINT}"
    )
    messages: list[tuple[str, str]] = [("system", system)]
    for demo in program.demos:
        messages.append(("user", f"Note: {demo.note}"))
        messages.append(
            ("assistant", f"Reasoning: {demo.rationale}\nLabel: {demo.label}")
        )
    messages.append(("user", f"Note: {note}"))
    return tuple(messages)


def build_request(
    program: PromptProgram,
    note: str,
    *,
    temperature: float = 0.0,
    seed: int | None = None,
    max_tokens: int = 512,
    model_tag: str = "default",
) -> CompletionRequest:
    return CompletionRequest(
        messages=render_messages(program, note),
        temperature=temperature,
        seed=seed,
        max_tokens=max_tokens,
        model_tag=model_tag,
    )


# -- default step programs -----------------------------------------------------

BINARY_INSTRUCTION = (
    "Go through each sentence of the patient note. If a sentence reflects "
    'eviction-related social determinants of health (SDoH), assign the label '
    '"Yes", else annotate as label "No".'
)

EVICTION_INSTRUCTION = (
    "Go through each sentence of the patient note. If a sentence reflects "
    "eviction-related social determinants of health (SDoH), assign the most "
    'appropriate label from the following list: "t3_Eviction_absent", '
    '"t3_Eviction_present_history", "t3_Eviction_present_current", '
    '"t3_Eviction_pending", "t3_Eviction_hypothetical", "t3_Eviction_mr_history", '
    '"t3_Eviction_mr_current", "Other". For the status part, if no eviction in '
    'the history and in the future: "absent"; if eviction is completed: '
    '"present"; if eviction noticed but not completed: "pending"; if eviction '
    'might happen in the future: "hypothetical"; if mutual rescission: "mr". '
    'For the timeframe part when status is "present" or "mr": if it happened '
    'within this natural year: "current"; if no specific time is shown or the '
    'time is before this natural year: "history".'
)

NON_EVICTION_INSTRUCTION = (
    'Choose the most appropriate label from "t1_Homelessness", '
    '"t1_InadequateHousing", "t1_LackOfAdequateFood", "t2_FinancialInsecurity", '
    '"t2_HousingInstability", "t2_MaterialHardship", '
    '"t2_TransportationInsecurity", "Other".\n'
    "'t1_Homelessness': an individual or family who lacks a fixed, regular, and "
    "adequate nighttime residence, such as those living in emergency shelters, "
    "transitional housing, or places not meant for habitation.\n"
    "'t1_InadequateHousing': an occupied housing unit that has moderate or "
    "severe physical problems (e.g., deficiencies in plumbing, heating, "
    "electricity, hallways, and upkeep).\n"
    "'t1_LackOfAdequateFood': limited or inadequate access to food because of "
    "insufficient money and other resources for food.\n"
    "'t2_FinancialInsecurity': the anxiety produced by possible exposure to "
    "adverse economic events and by the anticipated difficulty of recovering "
    "from them, such as fear of unemployment, a worsening financial situation, "
    "money mismanagement, or being financially exploited.\n"
    "'t2_HousingInstability': having difficulty paying rent, spending more than "
    "50% of household income on housing, frequent moves, living in overcrowded "
    "conditions, or doubling up with friends and relatives.\n"
    "'t2_MaterialHardship': difficulty meeting basic needs such as food, "
    "housing, or medical care.\n"
    "'t2_TransportationInsecurity': regularly being unable to get from place to "
    "place in a safe or timely manner because of a lack of resources."
)


def binary_program() -> PromptProgram:
    return PromptProgram(
        instruction=BINARY_INSTRUCTION,
        signature=ProgramSignature("note", BINARY_OUTPUTS),
    )


def eviction_program() -> PromptProgram:
    return PromptProgram(
        instruction=EVICTION_INSTRUCTION,
        signature=ProgramSignature("note", EVICTION_OUTPUTS),
    )


def non_eviction_program() -> PromptProgram:
    return PromptProgram(
        instruction=NON_EVICTION_INSTRUCTION,
        signature=ProgramSignature("note", NON_EVICTION_OUTPUTS),
    )


# -- persistence ----------------------------------------------------------------


def program_to_dict(program: PromptProgram) -> dict:
    return {
        "instruction": program.instruction,
        "signature": {
            "input_field": program.signature.input_field,
            "output_labels": list(program.signature.output_labels),
            "with_rationale": program.signature.with_rationale,
        },
        "demos": [
            {"note": d.note, "rationale": d.rationale, "label": d.label}
            for d in program.demos
        ],
        "version": program.version,
    }


def program_from_dict(data: dict) -> PromptProgram:
    sig = data["signature"]
    return PromptProgram(
        instruction=data["instruction"],
        signature=ProgramSignature(
            input_field=sig["input_field"],
            output_labels=tuple(sig["output_labels"]),
            with_rationale=sig.get("with_rationale", True),
        ),
        demos=tuple(Demo(**d) for d in data.get("demos", [])),
        version=data.get("version", 0),
    )


def save_program(path: str | Path, program: PromptProgram, extra: dict | None = None) -> None:
    """Write a versioned program file; ``extra`` holds optimizer metadata."""
    doc = program_to_dict(program)
    if extra:
        doc["meta"] = extra
    Path(path).write_text(
        json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def load_program(path: str | Path) -> PromptProgram:
    return program_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
