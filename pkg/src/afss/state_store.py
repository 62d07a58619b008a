"""Per-image learning state carried from epoch to epoch.

The table keeps ids in ascending order alongside parallel numpy arrays, so
every operation here is O(K) array work rather than per-record Python. All
operations return a new table; inputs are never mutated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Sequence

import numpy as np

from afss.errors import StaleMetricsWarning, ValidationError
from afss.sufficiency import Difficulty, MetricKind, StratifyThresholds, stratify_many, sufficiency_many


@dataclass(frozen=True)
class ImageRecord:
    image_id: Hashable
    precision: float
    recall: float
    last_used_epoch: int


@dataclass(frozen=True, eq=False)
class StateTable:
    """Learning state for a fixed set of images.

    ``ids`` is sorted ascending and unique; ``precision``, ``recall`` and
    ``last_used`` are aligned with it. ``epoch`` is the last completed
    training epoch (0 before training starts).
    """

    ids: tuple
    precision: np.ndarray
    recall: np.ndarray
    last_used: np.ndarray
    epoch: int = 0
    warmup_epochs: int = 5
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._index is None:
            object.__setattr__(self, "_index", {image_id: i for i, image_id in enumerate(self.ids)})
        for name in ("precision", "recall", "last_used"):
            arr = getattr(self, name)
            arr.setflags(write=False)
            if arr.shape != (len(self.ids),):
                raise ValidationError(f"{name} has shape {arr.shape}, expected ({len(self.ids)},)")

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, image_id) -> bool:
        return image_id in self._index

    def __eq__(self, other) -> bool:
        if not isinstance(other, StateTable):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.epoch == other.epoch
            and self.warmup_epochs == other.warmup_epochs
            and np.array_equal(self.precision, other.precision)
            and np.array_equal(self.recall, other.recall)
            and np.array_equal(self.last_used, other.last_used)
        )

    __hash__ = None

    @property
    def dataset_size(self) -> int:
        return len(self.ids)

    def index_of(self, image_id) -> int:
        try:
            return self._index[image_id]
        except KeyError:
            raise ValidationError(f"unknown image id {image_id!r}") from None

    def indices_of(self, image_ids: Iterable) -> np.ndarray:
        return np.fromiter((self.index_of(i) for i in image_ids), dtype=np.int64)

    def record(self, image_id) -> ImageRecord:
        i = self.index_of(image_id)
        return ImageRecord(image_id, float(self.precision[i]), float(self.recall[i]), int(self.last_used[i]))

    def records(self) -> Iterator[ImageRecord]:
        for i, image_id in enumerate(self.ids):
            yield ImageRecord(image_id, float(self.precision[i]), float(self.recall[i]), int(self.last_used[i]))

    def replace(self, **changes) -> "StateTable":
        values = {
            "ids": self.ids,
            "precision": self.precision,
            "recall": self.recall,
            "last_used": self.last_used,
            "epoch": self.epoch,
            "warmup_epochs": self.warmup_epochs,
            "_index": self._index,
        }
        values.update(changes)
        return StateTable(**values)


@dataclass(frozen=True)
class MetricsBatch:
    """Freshly evaluated ``(image_id, precision, recall)`` triples for one epoch."""

    entries: tuple
    source_epoch: int

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((i, float(p), float(r)) for i, p, r in self.entries))
        seen = set()
        for image_id, p, r in self.entries:
            if image_id in seen:
                raise ValidationError(f"duplicate image id {image_id!r} in metrics batch")
            seen.add(image_id)
            if not (0.0 <= p <= 1.0 and 0.0 <= r <= 1.0):
                raise ValidationError(f"metrics for {image_id!r} out of [0, 1]: ({p}, {r})")

    def __len__(self) -> int:
        return len(self.entries)


def table_from_records(
    records: Iterable[ImageRecord], epoch: int, warmup_epochs: int
) -> StateTable:
    """Build a table from records in any order, validating every invariant."""
    records = sorted(records, key=lambda rec: rec.image_id)
    ids = tuple(rec.image_id for rec in records)
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate image ids")
    if not ids:
        raise ValidationError("a state table needs at least one image")
    precision = np.array([rec.precision for rec in records], dtype=np.float64)
    recall = np.array([rec.recall for rec in records], dtype=np.float64)
    last_used = np.array([rec.last_used_epoch for rec in records], dtype=np.int64)
    if np.any((precision < 0) | (precision > 1) | (recall < 0) | (recall > 1)):
        raise ValidationError("precision/recall must lie in [0, 1]")
    if np.any((last_used < 0) | (last_used > epoch)):
        raise ValidationError("last_used_epoch must lie in [0, epoch]")
    return StateTable(ids, precision, recall, last_used, epoch=epoch, warmup_epochs=warmup_epochs)


def init_state(image_ids: Sequence, warmup_epochs: int = 5) -> StateTable:
    """Create the epoch-0 table.

    Every image starts at precision = recall = 0, i.e. HARD, so the scheduler
    trains the full dataset until the first metrics refresh at ``warmup_epochs``.
    """
    ids = list(image_ids)
    if not ids:
        raise ValidationError("image id list is empty")
    if len(set(ids)) != len(ids):
        seen, dupes = set(), []
        for i in ids:
            if i in seen:
                dupes.append(i)
            seen.add(i)
        raise ValidationError(f"duplicate image ids: {dupes[:5]!r}")
    if isinstance(warmup_epochs, bool) or int(warmup_epochs) != warmup_epochs or warmup_epochs < 1:
        raise ValidationError(f"warmup_epochs must be an integer >= 1, got {warmup_epochs!r}")
    ids.sort()
    k = len(ids)
    return StateTable(
        tuple(ids),
        np.zeros(k),
        np.zeros(k),
        np.zeros(k, dtype=np.int64),
        epoch=0,
        warmup_epochs=int(warmup_epochs),
    )


def tiers(table: StateTable, thresholds: StratifyThresholds | None = None,
          kind: MetricKind = MetricKind.MIN_PR) -> np.ndarray:
    """Difficulty level of every record, aligned with ``table.ids``."""
    return stratify_many(sufficiency_many(table.precision, table.recall, kind), thresholds)


def partition_indices(table: StateTable, thresholds: StratifyThresholds | None = None,
                      kind: MetricKind = MetricKind.MIN_PR) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ascending row indices of the easy, moderate and hard subsets."""
    levels = tiers(table, thresholds, kind)
    return (
        np.flatnonzero(levels == Difficulty.EASY),
        np.flatnonzero(levels == Difficulty.MODERATE),
        np.flatnonzero(levels == Difficulty.HARD),
    )


def partition(table: StateTable, thresholds: StratifyThresholds | None = None,
              kind: MetricKind = MetricKind.MIN_PR) -> tuple[frozenset, frozenset, frozenset]:
    easy, moderate, hard = partition_indices(table, thresholds, kind)
    ids = table.ids
    return (
        frozenset(ids[i] for i in easy),
        frozenset(ids[i] for i in moderate),
        frozenset(ids[i] for i in hard),
    )


def apply_usage(table: StateTable, plan, t: int) -> StateTable:
    """Stamp ``last_used = t`` on every image in the plan and advance the epoch.

    ``plan`` is an :class:`~afss.scheduler.EpochPlan` or any iterable of ids.
    """
    if t != table.epoch + 1:
        raise ValidationError(f"usage for epoch {t} cannot follow epoch {table.epoch}")
    selected = plan.omega if hasattr(plan, "omega") else plan
    rows = table.indices_of(selected)
    last_used = table.last_used.copy()
    last_used[rows] = t
    return table.replace(last_used=last_used, epoch=t)


def is_refresh_epoch(t: int, warmup_epochs: int, interval: int) -> bool:
    if interval < 1:
        raise ValidationError(f"refresh interval must be >= 1, got {interval}")
    return t >= warmup_epochs and (t - warmup_epochs) % interval == 0


def apply_metrics(table: StateTable, batch: MetricsBatch, t: int, interval: int = 5) -> StateTable:
    """Merge freshly evaluated precision/recall into the table.

    Off a refresh epoch the batch is ignored (with a :class:`StaleMetricsWarning`)
    and the very same table is returned. Images missing from the batch keep
    their previous values.
    """
    if batch.source_epoch != t:
        raise ValidationError(f"metrics batch is for epoch {batch.source_epoch}, not {t}")
    if t != table.epoch:
        raise ValidationError(f"metrics for epoch {t} offered to a table at epoch {table.epoch}")
    rows = table.indices_of(image_id for image_id, _, _ in batch.entries)
    if not is_refresh_epoch(t, table.warmup_epochs, interval):
        warnings.warn(
            f"epoch {t} is not a refresh epoch; {len(batch)} metric rows ignored",
            StaleMetricsWarning,
            stacklevel=2,
        )
        return table
    if not len(rows):
        return table
    precision = table.precision.copy()
    recall = table.recall.copy()
    precision[rows] = [p for _, p, _ in batch.entries]
    recall[rows] = [r for _, _, r in batch.entries]
    return table.replace(precision=precision, recall=recall)


def apply_metrics_arrays(table: StateTable, rows: np.ndarray, precision: np.ndarray,
                         recall: np.ndarray) -> StateTable:
    """Array fast path for a refresh; the caller has already checked the cadence."""
    new_p = table.precision.copy()
    new_r = table.recall.copy()
    new_p[rows] = precision
    new_r[rows] = recall
    return table.replace(precision=new_p, recall=new_r)
