"""Per-image precision/recall, learning sufficiency and difficulty tiers.

All scalar functions are pure. The ``*_many`` variants operate on numpy
arrays and are what the state store and scheduler use on whole tables.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from afss.errors import ValidationError


class MetricKind(str, enum.Enum):
    MIN_PR = "min_pr"
    F1 = "f1"


class Difficulty(enum.IntEnum):
    """Difficulty tier. Integer order follows sufficiency: HARD < MODERATE < EASY."""

    HARD = 0
    MODERATE = 1
    EASY = 2


@dataclass(frozen=True)
class DetectionCounts:
    true_positives: int
    false_positives: int
    false_negatives: int

    def __post_init__(self):
        for name in ("true_positives", "false_positives", "false_negatives"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 0:
                raise ValidationError(f"{name} must be a nonnegative integer, got {value!r}")


@dataclass(frozen=True)
class StratifyThresholds:
    easy_above: float = 0.85
    hard_below: float = 0.55

    def __post_init__(self):
        if not 0.0 < self.easy_above <= 1.0:
            raise ValidationError(f"easy_above must lie in (0, 1], got {self.easy_above}")
        if not 0.0 <= self.hard_below < 1.0:
            raise ValidationError(f"hard_below must lie in [0, 1), got {self.hard_below}")
        if not self.hard_below < self.easy_above:
            raise ValidationError("hard_below must be strictly below easy_above")


def precision_recall_from_counts(counts: DetectionCounts) -> tuple[float, float]:
    """Return ``(precision, recall)`` for one image.

    An empty denominator scores 1: no predictions means nothing was wrongly
    predicted, and no ground truth means nothing was missed.
    """
    tp, fp, fn = counts.true_positives, counts.false_positives, counts.false_negatives
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    return float(precision), float(recall)


def learning_sufficiency(precision: float, recall: float, kind: MetricKind = MetricKind.MIN_PR) -> float:
    if not (0.0 <= precision <= 1.0 and 0.0 <= recall <= 1.0):
        raise ValidationError(f"precision/recall must lie in [0, 1], got ({precision}, {recall})")
    kind = MetricKind(kind)
    if kind is MetricKind.MIN_PR:
        return float(min(precision, recall))
    total = precision + recall
    if total == 0.0:
        return 0.0
    return float(min(1.0, 2.0 * precision * recall / total))


def stratify(score: float, thresholds: StratifyThresholds | None = None) -> Difficulty:
    """Map a sufficiency score to its tier; both boundaries belong to MODERATE."""
    thresholds = thresholds or StratifyThresholds()
    if score > thresholds.easy_above:
        return Difficulty.EASY
    if score < thresholds.hard_below:
        return Difficulty.HARD
    return Difficulty.MODERATE


def sufficiency_many(precision: np.ndarray, recall: np.ndarray, kind: MetricKind = MetricKind.MIN_PR) -> np.ndarray:
    precision = np.asarray(precision, dtype=np.float64)
    recall = np.asarray(recall, dtype=np.float64)
    if MetricKind(kind) is MetricKind.MIN_PR:
        return np.minimum(precision, recall)
    total = precision + recall
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(total > 0.0, 2.0 * precision * recall / np.where(total > 0.0, total, 1.0), 0.0)
    return np.minimum(f1, 1.0)


def stratify_many(scores: np.ndarray, thresholds: StratifyThresholds | None = None) -> np.ndarray:
    """Vectorised :func:`stratify`; returns an int8 array of :class:`Difficulty` values."""
    thresholds = thresholds or StratifyThresholds()
    scores = np.asarray(scores, dtype=np.float64)
    levels = np.full(scores.shape, Difficulty.MODERATE, dtype=np.int8)
    levels[scores > thresholds.easy_above] = Difficulty.EASY
    levels[scores < thresholds.hard_below] = Difficulty.HARD
    return levels
