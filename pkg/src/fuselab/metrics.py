"""Knowledge-utilization and fairness measurement.

Accuracy over a probe corpus, demographic parity, per-class TPR gaps with
their RMS aggregate, and the min/max bounds report for fused models.
Conditional frequencies are computed with exact rational arithmetic and
converted to float once at the end, so brute-force recounts match exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from fuselab.datagen.text import LabeledExample
from fuselab.models import Model, classifier_log_probs


class UndefinedGapError(ValueError):
    """A (group, label) cell is empty; the gap there has no value."""


@dataclass(frozen=True)
class UtilizationRecord:
    dataset_id: str
    task_id: str
    value: float
    metric: str


@dataclass(frozen=True)
class BiasReport:
    dp: float
    gaps: dict[int, float | None]
    gap_rms: float
    accuracy: float

    def to_dict(self) -> dict:
        return {
            "dp": self.dp,
            "tpr_gap": {str(k): v for k, v in self.gaps.items()},
            "gap_rms": self.gap_rms,
            "accuracy": self.accuracy,
        }


def predict(model: Model, data: Sequence[LabeledExample]) -> np.ndarray:
    """Argmax labels; ties resolve to the lowest label index."""
    lp = classifier_log_probs(model, [list(ex.tokens) for ex in data])
    return lp.argmax(axis=1)


def accuracy(
    model: Model,
    data: Sequence[LabeledExample],
    dataset_id: str = "",
    task_id: str = "classification",
) -> UtilizationRecord:
    """Fraction of examples whose predicted label matches the stored one."""
    if not len(data):
        raise ValueError("empty dataset")
    preds = predict(model, data)
    labels = np.array([ex.label for ex in data])
    value = float(Fraction(int((preds == labels).sum()), len(data)))
    return UtilizationRecord(dataset_id, task_id, value, "accuracy")


def demographic_parity(preds: Sequence[int], protected: Sequence[int]) -> float:
    """Summed absolute difference of per-label prediction frequencies
    between the two protected groups (binary maximum is 2)."""
    if len(preds) != len(protected):
        raise ValueError("preds and protected must have equal length")
    groups = {0: [], 1: []}
    for p, g in zip(preds, protected):
        if g not in (0, 1):
            raise ValueError(f"protected attribute must be binary, got {g!r}")
        groups[g].append(p)
    if not groups[0] or not groups[1]:
        raise ValueError("both protected groups must be nonempty")
    total = Fraction(0)
    for label in sorted(set(preds)):
        f1 = Fraction(sum(1 for p in groups[1] if p == label), len(groups[1]))
        f0 = Fraction(sum(1 for p in groups[0] if p == label), len(groups[0]))
        total += abs(f1 - f0)
    return float(total)


def tpr_gap(
    preds: Sequence[int], truth: Sequence[int], protected: Sequence[int]
) -> dict[int, float | None]:
    """Per-label difference of true-positive rates between protected groups.

    An empty (group, label) cell yields None for that label, never a silent
    zero.
    """
    if not (len(preds) == len(truth) == len(protected)):
        raise ValueError("preds, truth, and protected must have equal length")
    gaps: dict[int, float | None] = {}
    for label in sorted(set(truth)):
        rates = []
        for g in (1, 0):
            cell = [p for p, t, a in zip(preds, truth, protected) if t == label and a == g]
            rates.append(
                Fraction(sum(1 for p in cell if p == label), len(cell)) if cell else None
            )
        if rates[0] is None or rates[1] is None:
            gaps[label] = None
        else:
            gaps[label] = float(rates[0] - rates[1])
    return gaps


def gap_rms(gaps: dict[int, float | None]) -> float:
    """Root mean square of the per-label gaps."""
    if not gaps:
        raise ValueError("no gaps given")
    values = []
    for label, g in gaps.items():
        if g is None:
            raise UndefinedGapError(f"gap for label {label} is undefined")
        values.append(float(g) ** 2)
    return float(np.sqrt(np.mean(values)))


def bias_report(
    model: Model, data: Sequence[LabeledExample], attr: str
) -> BiasReport:
    """DP, TPR gaps, RMS aggregate, and accuracy of one model on one probe
    corpus with respect to one binary attribute."""
    preds = [int(p) for p in predict(model, data)]
    truth = [ex.label for ex in data]
    protected = [ex.attributes[attr] for ex in data]
    gaps = tpr_gap(preds, truth, protected)
    rms = gap_rms(gaps) if all(g is not None for g in gaps.values()) else float("nan")
    acc = float(np.mean([p == t for p, t in zip(preds, truth)]))
    return BiasReport(demographic_parity(preds, protected), gaps, rms, acc)


@dataclass(frozen=True)
class BoundsReport:
    """The fused model's utilization against the individual models' range.

    This reports the interval hypothesis; it never asserts it.
    """

    minimum: float
    maximum: float
    fused: float
    within: bool
    dataset_id: str
    task_id: str
    metric: str


def bounds_report(
    individual: Sequence[UtilizationRecord], fused: UtilizationRecord
) -> BoundsReport:
    if not individual:
        raise ValueError("at least one individual record required")
    for rec in individual:
        if (rec.dataset_id, rec.task_id, rec.metric) != (
            fused.dataset_id,
            fused.task_id,
            fused.metric,
        ):
            raise ValueError(
                "bounds_report requires records for one (dataset, task, metric); "
                f"got {rec} vs {fused}"
            )
    lo = min(r.value for r in individual)
    hi = max(r.value for r in individual)
    return BoundsReport(
        lo, hi, fused.value, lo <= fused.value <= hi,
        fused.dataset_id, fused.task_id, fused.metric,
    )
