from __future__ import annotations

import itertools

import pytest

from sdoh_pipeline.annotator import AnnotationResult, Step
from sdoh_pipeline.errors import UnparseableOutputError
from sdoh_pipeline.ingest import NotePool, RawNote
from sdoh_pipeline.quality import Decision, validate_example


def _scripted_step(labels):
    """An annotate-step whose passes return the scripted labels in order."""
    it = iter(labels)
    calls = []

    def step(note, seed):
        calls.append(seed)
        label = next(it)
        if label == "<boom>":
            raise UnparseableOutputError("scripted failure")
        return AnnotationResult(
            step=Step.EVICTION, label=label, rationale=f"because {label}",
            raw_output=label, run_index=seed,
        )

    step.calls = calls
    return step


def _pool_with(note_id="src1"):
    pool = NotePool([RawNote(id=note_id, full_text="text", source="user")])
    pool.draw(1)
    return pool


def test_first_pass_match_accepts_as_required():
    step = _scripted_step(["X", "Y", "Z"])
    outcome = validate_example("note", "X", step)
    assert outcome.decision is Decision.ACCEPTED_AS_REQUIRED
    assert outcome.final_label == "X"
    assert len(outcome.passes) == 1
    assert step.calls == [0]  # passes 2-3 never ran


def test_three_way_agreement_accepts_annotated_label():
    step = _scripted_step(["Y", "Y", "Y"])
    outcome = validate_example("note", "X", step)
    assert outcome.decision is Decision.ACCEPTED_AS_ANNOTATED
    assert outcome.final_label == "Y"
    assert len(outcome.passes) == 3


def test_disagreement_discards_and_returns_note():
    pool = _pool_with("src1")
    step = _scripted_step(["X2", "Y2", "X2"])
    outcome = validate_example("note", "X", step, pool, "src1")
    assert outcome.decision is Decision.DISCARDED
    assert outcome.final_label is None
    assert pool.counts()["available"] == 1  # exactly one return


def test_distinct_seeds_per_pass():
    step = _scripted_step(["A", "B", "C"])
    validate_example("note", "X", step, seed_base=10)
    assert step.calls == [10, 11, 12]


def test_annotation_error_forces_discard():
    pool = _pool_with("src9")
    step = _scripted_step(["<boom>", "Y", "Y"])
    outcome = validate_example("note", "Y", step, pool, "src9")
    # errored pass 1 cannot match, and cannot equal passes 2-3
    assert outcome.decision is Decision.DISCARDED
    assert len(outcome.passes) == 3
    assert pool.counts()["available"] == 1


def test_two_errors_are_not_identical():
    step = _scripted_step(["Z", "<boom>", "<boom>"])
    outcome = validate_example("note", "X", step)
    assert outcome.decision is Decision.DISCARDED


def test_other_is_a_real_label_for_consistency():
    step = _scripted_step(["Other", "Other", "Other"])
    outcome = validate_example("note", "X", step)
    assert outcome.decision is Decision.ACCEPTED_AS_ANNOTATED
    assert outcome.final_label == "Other"


def _expected_decision(triple, required):
    if triple[0] == required:
        return Decision.ACCEPTED_AS_REQUIRED, 1
    if triple[0] == triple[1] == triple[2]:
        return Decision.ACCEPTED_AS_ANNOTATED, 3
    return Decision.DISCARDED, 3


@pytest.mark.parametrize("triple", list(itertools.product("XYZ", repeat=3)))
def test_exhaustive_27_triples_match_protocol(triple):
    """Brute-force protocol oracle over every pass-triple of a 3-label step."""
    required = "X"
    expected, n_passes = _expected_decision(triple, required)
    pool = _pool_with("s")
    step = _scripted_step(list(triple))
    outcome = validate_example("note", required, step, pool, "s")
    assert outcome.decision is expected
    assert len(outcome.passes) == n_passes
    assert len(step.calls) == n_passes  # never exactly two passes
    expected_returns = 1 if expected is Decision.DISCARDED else 0
    assert pool.counts()["available"] == expected_returns


def test_accepted_label_always_from_passes():
    for triple in itertools.product("XYZ", repeat=3):
        step = _scripted_step(list(triple))
        outcome = validate_example("note", "X", step)
        if outcome.decision is not Decision.DISCARDED:
            assert outcome.final_label in set(triple) | {"X"}
