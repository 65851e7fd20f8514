"""Exception types shared across the pipeline.

Every error raised by this package derives from :class:`PipelineError` so
callers (CLI, HTTP service) can map failures to structured responses in one
place.
"""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PipelineError):
    """Invalid or incomplete configuration, detected before any model call."""


# --- taxonomy ---------------------------------------------------------------


class InvalidLabelError(PipelineError):
    """A string is not one of the canonical label tokens."""


class MissingDefinitionError(PipelineError):
    """No definition registered for a label (or the sentinel was asked for one)."""


# --- ingest -----------------------------------------------------------------


class PoolExhaustedError(PipelineError):
    """Fewer available raw notes than requested."""


class InvalidStateError(PipelineError):
    """A raw-note state transition was attempted from the wrong state."""


# --- gateway ----------------------------------------------------------------


class ProviderError(PipelineError):
    """The completion backend failed.

    ``transient`` marks failures worth retrying (connection resets, 429/5xx).
    """

    def __init__(self, message: str, *, transient: bool = False):
        super().__init__(message)
        self.transient = transient


class GatewayTimeoutError(ProviderError):
    """The completion backend did not answer in time (always transient)."""

    def __init__(self, message: str):
        super().__init__(message, transient=True)


class CassetteMissError(PipelineError):
    """Strict replay was asked for a request that is not in the cassette."""


class MockMissError(PipelineError):
    """A scripted mock backend received a request no rule matches."""


# --- augmenter --------------------------------------------------------------


class EmptyRawNoteError(PipelineError):
    """An augmentation prompt was rendered from an empty raw note."""


class UnknownItemError(PipelineError):
    """Verdict submitted for an item id that is not in the batch."""


class AlreadyVerdictedError(PipelineError):
    """Verdict submitted for an item that already has one."""


class MissingFeedbackError(PipelineError):
    """A False verdict was submitted without feedback."""


class IncompleteVerdictsError(PipelineError):
    """Batch accuracy or round advance requested before every item is verdicted."""


class InvalidRevisionError(PipelineError):
    """A revised prompt lost one of the required placeholders."""


class ThresholdNotReachedError(PipelineError):
    """The augmenter loop ran out of rounds below the accuracy threshold.

    Carries the final state and the notes accepted so far, so callers can
    keep partial results.
    """

    def __init__(self, message: str, *, state=None, accepted=None):
        super().__init__(message)
        self.state = state
        self.accepted = list(accepted or [])


# --- annotator / optimizer ---------------------------------------------------


class UnparseableOutputError(PipelineError):
    """Model output contained no legal label token, even after one reprompt."""


class CascadeError(PipelineError):
    """A cascade step failed; ``trace`` holds the partial trace."""

    def __init__(self, message: str, *, trace=None):
        super().__init__(message)
        self.trace = trace


class EmptyCandidatePoolError(PipelineError):
    """Prompt search has no demos and no train examples to sample from."""


# --- metrics ----------------------------------------------------------------


class LengthMismatchError(PipelineError):
    """Gold and prediction sequences differ in length."""


class UnknownGoldLabelError(PipelineError):
    """A gold label is outside the scoring label set."""


class EmptyMatrixError(PipelineError):
    """A metric was requested on a confusion matrix with zero examples."""


class TooFewRunsError(PipelineError):
    """Confidence intervals and significance tests need at least two runs."""


# --- dataset store ----------------------------------------------------------


class NegativeCountError(PipelineError):
    """A split plan override asked for a negative target count."""


class InsufficientRealRecordsError(PipelineError):
    """Not enough real records to satisfy the requested mix fraction."""


class MissingRationaleError(PipelineError):
    """A reasoning-style export hit a record without a rationale."""
