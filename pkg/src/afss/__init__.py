"""Anti-forgetting epoch sampling for detector training.

Tracks per-image precision/recall and last use, and decides each epoch
which images train: all hard images, a share of moderate ones with forced
short-term coverage, and a small review budget of easy ones.
"""

from afss.errors import ParseError, StaleMetricsWarning, ValidationError, VersionError
from afss.scheduler import EpochPlan, ForcedReviewPolicy, SchedulerConfig, compose_plan
from afss.state_store import (
    ImageRecord,
    MetricsBatch,
    StateTable,
    apply_metrics,
    apply_usage,
    init_state,
    is_refresh_epoch,
    partition,
)
from afss.sufficiency import (
    DetectionCounts,
    Difficulty,
    MetricKind,
    StratifyThresholds,
    learning_sufficiency,
    precision_recall_from_counts,
    stratify,
)

__version__ = "0.1.0"

__all__ = [
    "DetectionCounts",
    "Difficulty",
    "EpochPlan",
    "ForcedReviewPolicy",
    "ImageRecord",
    "MetricKind",
    "MetricsBatch",
    "ParseError",
    "SchedulerConfig",
    "StaleMetricsWarning",
    "StateTable",
    "StratifyThresholds",
    "ValidationError",
    "VersionError",
    "apply_metrics",
    "apply_usage",
    "compose_plan",
    "init_state",
    "is_refresh_epoch",
    "learning_sufficiency",
    "partition",
    "precision_recall_from_counts",
    "stratify",
]
