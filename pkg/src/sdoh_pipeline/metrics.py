"""Confusion-matrix statistics for single-label multiclass scoring.

Scoring is strict: a prediction outside the report's label set (``Other``,
an unparseable output, a wrong-step token) is never excluded — it lands in a
reserved column and costs the gold class a false negative.  Macro-F1
averages per-class F1 over the *requested* label set, so zero-support
classes contribute 0 rather than silently disappearing; callers who want a
class omitted pass a smaller label set.

Implementation notes: per-class F1 is computed as 2*TP / (2*TP + FP + FN)
(one rounding step, and micro-F1 then equals accuracy exactly on in-set
predictions); both MCC variants keep integer arithmetic until the final
division.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import (
    EmptyMatrixError,
    LengthMismatchError,
    TooFewRunsError,
    UnknownGoldLabelError,
)


@dataclass
class ConfusionMatrix:
    labels: tuple[str, ...]
    counts: np.ndarray        # (L, L) gold x predicted
    unlisted_pred: np.ndarray  # (L,) predictions outside the label set, per gold

    @property
    def total(self) -> int:
        return int(self.counts.sum() + self.unlisted_pred.sum())

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def class_counts(self, label: str) -> tuple[int, int, int, int]:
        """(TP, FP, FN, TN) for one class, one-vs-rest."""
        i = self.index(label)
        tp = int(self.counts[i, i])
        fp = int(self.counts[:, i].sum() - self.counts[i, i])
        fn = int(
            self.counts[i, :].sum() - self.counts[i, i] + self.unlisted_pred[i]
        )
        tn = self.total - tp - fp - fn
        return tp, fp, fn, tn


def confusion_matrix(
    golds: Sequence[str], preds: Sequence[str], labelset: Sequence[str]
) -> ConfusionMatrix:
    """Count gold x predicted pairs over an explicit label set.

    Gold labels must belong to the set; predictions outside it increment the
    reserved wrong-prediction column for their gold class.
    """
    if len(golds) != len(preds):
        raise LengthMismatchError(
            f"{len(golds)} golds vs {len(preds)} predictions"
        )
    labels = tuple(labelset)
    index = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    unlisted = np.zeros(len(labels), dtype=np.int64)
    for gold, pred in zip(golds, preds):
        try:
            g = index[gold]
        except KeyError:
            raise UnknownGoldLabelError(f"gold label {gold!r} not in label set") from None
        p = index.get(pred)
        if p is None:
            unlisted[g] += 1
        else:
            counts[g, p] += 1
    return ConfusionMatrix(labels=labels, counts=counts, unlisted_pred=unlisted)


def _require_nonempty(matrix: ConfusionMatrix) -> None:
    if matrix.total == 0:
        raise EmptyMatrixError("confusion matrix has zero examples")


def _f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def per_class_f1(matrix: ConfusionMatrix) -> dict[str, float]:
    return {
        lab: _f1_from_counts(*matrix.class_counts(lab)[:3]) for lab in matrix.labels
    }


def precision_recall(matrix: ConfusionMatrix, label: str) -> tuple[float, float]:
    tp, fp, fn, _ = matrix.class_counts(label)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall


def micro_f1(matrix: ConfusionMatrix) -> float:
    """F1 over pooled TP/FP/FN; equals accuracy when every pred is in-set."""
    _require_nonempty(matrix)
    tp = int(np.trace(matrix.counts))
    fp = int(matrix.counts.sum() - np.trace(matrix.counts))
    fn = fp + int(matrix.unlisted_pred.sum())
    return _f1_from_counts(tp, fp, fn)


def macro_f1(matrix: ConfusionMatrix) -> float:
    """Unweighted mean of per-class F1 over the matrix's full label set."""
    _require_nonempty(matrix)
    scores = per_class_f1(matrix)
    return sum(scores.values()) / len(scores)


def accuracy(matrix: ConfusionMatrix) -> float:
    _require_nonempty(matrix)
    return int(np.trace(matrix.counts)) / matrix.total


def mcc_binary(matrix: ConfusionMatrix, label: str) -> float:
    """One-vs-rest Matthews correlation; 0 on a degenerate denominator."""
    _require_nonempty(matrix)
    tp, fp, fn, tn = matrix.class_counts(label)
    num = tp * tn - fp * fn
    den2 = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if den2 == 0:
        return 0.0
    return num / math.sqrt(den2)


def mcc_multiclass(matrix: ConfusionMatrix) -> float:
    """Generalized correlation over the full matrix; 0 on degenerate inputs.

    The reserved wrong-prediction column is treated as one extra predicted
    class with zero gold support, which reduces to the plain formula when it
    is empty.
    """
    _require_nonempty(matrix)
    n = len(matrix.labels)
    ext = np.zeros((n + 1, n + 1), dtype=np.int64)
    ext[:n, :n] = matrix.counts
    ext[:n, n] = matrix.unlisted_pred
    correct = int(np.trace(ext))
    total = int(ext.sum())
    gold_totals = ext.sum(axis=1)
    pred_totals = ext.sum(axis=0)
    cross = int(np.dot(gold_totals, pred_totals))
    num = correct * total - cross
    den_gold = total * total - int(np.dot(gold_totals, gold_totals))
    den_pred = total * total - int(np.dot(pred_totals, pred_totals))
    if den_gold == 0 or den_pred == 0:
        return 0.0
    return num / math.sqrt(den_gold * den_pred)


def ci95(per_run_scores: Sequence[float]) -> tuple[float, float, float]:
    """Student-t 95% interval over per-run scores: (mean, lower, upper)."""
    n = len(per_run_scores)
    if n < 2:
        raise TooFewRunsError("confidence interval needs at least 2 runs")
    mean = math.fsum(per_run_scores) / n
    var = math.fsum((x - mean) ** 2 for x in per_run_scores) / (n - 1)
    half = float(stats.t.ppf(0.975, n - 1)) * math.sqrt(var / n)
    return mean, mean - half, mean + half


def cascaded_correct(
    step1_pred: str,
    second_step_pred: str | None,
    gold_binary: str,
    gold_label: str,
) -> bool:
    """Overall correctness gates on step 1: a wrong route can never score."""
    if step1_pred != gold_binary:
        return False
    return second_step_pred == gold_label


def compare_to_baseline(
    runs_a: Sequence[float], runs_b: Sequence[float]
) -> float:
    """Two-sided Welch t-test p-value between two per-run score vectors."""
    if len(runs_a) < 2 or len(runs_b) < 2:
        raise TooFewRunsError("significance test needs at least 2 runs per side")
    a = np.asarray(runs_a, dtype=float)
    b = np.asarray(runs_b, dtype=float)
    if a.std(ddof=1) == 0.0 and b.std(ddof=1) == 0.0:
        return 1.0 if a.mean() == b.mean() else 0.0
    return float(stats.ttest_ind(a, b, equal_var=False).pvalue)


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    mcc: float
    support: int


@dataclass
class MetricReport:
    labels: tuple[str, ...]
    micro_f1: float
    macro_f1: float
    per_class: dict[str, ClassMetrics]
    mcc_multiclass: float
    mcc_mean_binary: float  # the per-class average reading of "overall MCC"
    n_examples: int
    ci: tuple[float, float, float] | None = None
    n_runs: int = 1
    significance: str = "welch-t"  # test behind any p-values reported alongside

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "per_class": {
                lab: vars(m).copy() for lab, m in self.per_class.items()
            },
            "mcc_multiclass": self.mcc_multiclass,
            "mcc_mean_binary": self.mcc_mean_binary,
            "n_examples": self.n_examples,
            "ci95": None if self.ci is None else list(self.ci),
            "n_runs": self.n_runs,
            "significance": self.significance,
        }


def build_report(
    golds: Sequence[str],
    preds: Sequence[str],
    labelset: Sequence[str],
    *,
    per_run_scores: Sequence[float] | None = None,
) -> MetricReport:
    matrix = confusion_matrix(golds, preds, labelset)
    _require_nonempty(matrix)
    per_class = {}
    for lab in matrix.labels:
        p, r = precision_recall(matrix, lab)
        tp, fp, fn, _ = matrix.class_counts(lab)
        per_class[lab] = ClassMetrics(
            precision=p,
            recall=r,
            f1=_f1_from_counts(tp, fp, fn),
            mcc=mcc_binary(matrix, lab),
            support=tp + fn,
        )
    mcc_values = [m.mcc for m in per_class.values()]
    ci = None
    n_runs = 1
    if per_run_scores is not None:
        ci = ci95(per_run_scores)
        n_runs = len(per_run_scores)
    return MetricReport(
        labels=matrix.labels,
        micro_f1=micro_f1(matrix),
        macro_f1=macro_f1(matrix),
        per_class=per_class,
        mcc_multiclass=mcc_multiclass(matrix),
        mcc_mean_binary=sum(mcc_values) / len(mcc_values),
        n_examples=matrix.total,
        ci=ci,
        n_runs=n_runs,
    )


def render_table(report: MetricReport) -> str:
    """Aligned text table: one row per class, then an Overall row."""
    rows = [("Class", "Support", "Precision", "Recall", "F1", "MCC")]
    for lab in report.labels:
        m = report.per_class[lab]
        rows.append(
            (
                lab,
                str(m.support),
                f"{m.precision:.3f}",
                f"{m.recall:.3f}",
                f"{m.f1:.3f}",
                f"{m.mcc:.3f}",
            )
        )
    overall = (
        "Overall",
        str(report.n_examples),
        f"macro={report.macro_f1:.3f}",
        f"micro={report.micro_f1:.3f}",
        f"mcc={report.mcc_multiclass:.3f}",
        f"mcc_mean={report.mcc_mean_binary:.3f}",
    )
    rows.append(overall)
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    if report.ci is not None:
        mean, lo, hi = report.ci
        lines.append(
            f"95% CI over {report.n_runs} runs: {mean:.3f} ({lo:.3f}-{hi:.3f})"
            f" [{report.significance}]"
        )
    return "\n".join(lines)
