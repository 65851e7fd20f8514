"""Bootstrap-few-shot prompt search scored by answer exact match.

The base (zero-demo) program teaches itself: it runs over the train set and
every correctly answered example becomes a candidate demo carrying the
generated rationale.  Random search then samples demo subsets, scores each
candidate program on the dev set by mean exact match, and returns the argmax
(ties break toward the lowest candidate index; candidate 0 is always the
unmodified base program).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Sequence

from .annotator import annotate
from .errors import EmptyCandidatePoolError, UnparseableOutputError
from .gateway import Gateway
from .programs import Demo, PromptProgram


def exact_match(predicted: str, gold: str) -> int:
    """1 iff the predicted token is identical to the gold token."""
    return int(predicted == gold)


@dataclass(frozen=True)
class LabeledExample:
    note: str
    gold: str
    rationale: str | None = None


@dataclass(frozen=True)
class OptimizeConfig:
    seed: int  # explicit on purpose: search must be reproducible
    num_candidates: int = 16
    max_demos: int = 8


@dataclass(frozen=True)
class CandidateScore:
    candidate: int
    demo_count: int
    score: float


def bootstrap_demos(
    teacher: PromptProgram,
    trainset: Sequence[LabeledExample],
    gateway: Gateway,
    *,
    temperature: float = 0.0,
) -> list[Demo]:
    """Demos harvested from the teacher's own correct answers.

    A kept demo carries the teacher's generated rationale, so few-shot
    prompts show worked reasoning, not just labels.  Zero kept demos is a
    valid outcome.
    """
    if not trainset:
        raise ValueError("trainset must be non-empty")
    demos: list[Demo] = []
    for example in trainset:
        try:
            result = annotate(example.note, teacher, gateway, temperature=temperature)
        except UnparseableOutputError:
            continue
        if exact_match(result.label, example.gold) == 1:
            demos.append(Demo(example.note, result.rationale, result.label))
    return demos


def evaluate_program(
    program: PromptProgram,
    dataset: Sequence[LabeledExample],
    gateway: Gateway,
    *,
    temperature: float = 0.0,
) -> float:
    """Mean exact match over the dataset; unparseable outputs score 0."""
    if not dataset:
        raise ValueError("dataset must be non-empty")
    correct = 0
    for example in dataset:
        try:
            result = annotate(example.note, program, gateway, temperature=temperature)
        except UnparseableOutputError:
            continue
        correct += exact_match(result.label, example.gold)
    return correct / len(dataset)


def optimize(
    base: PromptProgram,
    trainset: Sequence[LabeledExample],
    devset: Sequence[LabeledExample],
    config: OptimizeConfig,
    gateway: Gateway,
) -> tuple[PromptProgram, list[CandidateScore]]:
    """Seeded random search over demo subsets; returns (best, score table)."""
    if not devset:
        raise ValueError("devset must be non-empty")
    for example in list(trainset) + list(devset):
        if example.gold not in base.signature.output_labels:
            raise ValueError(f"gold label {example.gold!r} illegal for this signature")

    pool: list[Demo] = []
    if trainset:
        pool.extend(bootstrap_demos(base, trainset, gateway))
        pool.extend(
            Demo(ex.note, ex.rationale or "", ex.gold) for ex in trainset
        )
    if not pool:
        raise EmptyCandidatePoolError(
            "no bootstrapped demos and no train examples to sample from"
        )

    rng = random.Random(config.seed)
    candidates: list[PromptProgram] = [base.with_demos(())]
    for _ in range(1, config.num_candidates):
        k = rng.randint(1, config.max_demos)
        chosen = rng.sample(pool, min(k, len(pool)))
        candidates.append(base.with_demos(chosen))

    table = [
        CandidateScore(i, len(c.demos), evaluate_program(c, devset, gateway))
        for i, c in enumerate(candidates)
    ]
    # max() keeps the first maximum, so ties already go to the lowest index.
    best_index = max(range(len(table)), key=lambda i: table[i].score)
    best = replace(candidates[best_index], version=base.version + 1)
    return best, table
