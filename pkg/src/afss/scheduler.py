"""Epoch plan composition: which images train in epoch ``t``.

Easy images are reviewed sparsely (a small budget, half of which may go to
images unused for a long time), moderate images get a fixed share plus any
image unused for too long, and hard images are always included.

Sampling conventions, relied on by anything that wants to reproduce a plan:

* candidate pools are ascending row indices of the id-sorted table;
* draws use ``rng.choice(len(pool), size=k, replace=False)`` and are skipped
  entirely when ``k == 0``;
* the draw order is forced review, then random easy, then random moderate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from functools import lru_cache

import numpy as np

from afss.errors import ValidationError
from afss.state_store import StateTable, partition_indices
from afss.sufficiency import MetricKind, StratifyThresholds

SCHEDULER_STREAM = 0

ORIGIN_TAGS = ("FR", "RE", "FC", "RM", "HD")


class ForcedReviewPolicy(str, enum.Enum):
    UNIFORM_RANDOM = "uniform_random"
    STALENESS_PRIORITY = "staleness_priority"


def _check_fraction(name, value):
    if isinstance(value, bool) or not 0.0 < value <= 1.0:
        raise ValidationError(f"{name} must lie in (0, 1], got {value!r}")


def _check_epochs(name, value, allow_inf=False):
    if allow_inf and value == math.inf:
        return
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ValidationError(f"{name} must be an integer >= 1, got {value!r}")


@dataclass(frozen=True)
class SchedulerConfig:
    """Every knob of the sampling strategy; defaults are the reference settings.

    ``review_staleness`` and ``coverage_staleness`` accept ``math.inf`` to
    disable forced review / forced coverage (ablations).
    """

    easy_budget_fraction: float = 0.02
    forced_review_cap_fraction: float = 0.5
    review_staleness: int | float = 10
    moderate_fraction: float = 0.4
    coverage_staleness: int | float = 3
    refresh_interval: int = 5
    warmup_epochs: int = 5
    thresholds: StratifyThresholds = field(default_factory=StratifyThresholds)
    metric_kind: MetricKind = MetricKind.MIN_PR
    forced_review_policy: ForcedReviewPolicy = ForcedReviewPolicy.UNIFORM_RANDOM
    seed: int = 0

    def __post_init__(self):
        _check_fraction("easy_budget_fraction", self.easy_budget_fraction)
        _check_fraction("forced_review_cap_fraction", self.forced_review_cap_fraction)
        _check_fraction("moderate_fraction", self.moderate_fraction)
        _check_epochs("review_staleness", self.review_staleness, allow_inf=True)
        _check_epochs("coverage_staleness", self.coverage_staleness, allow_inf=True)
        _check_epochs("refresh_interval", self.refresh_interval)
        _check_epochs("warmup_epochs", self.warmup_epochs)
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be an integer in [0, 2**64), got {self.seed!r}")
        # normalise enum-valued fields given as strings
        object.__setattr__(self, "metric_kind", MetricKind(self.metric_kind))
        object.__setattr__(self, "forced_review_policy", ForcedReviewPolicy(self.forced_review_policy))
        for name in ("review_staleness", "coverage_staleness"):
            value = getattr(self, name)
            object.__setattr__(self, name, math.inf if value == math.inf else int(value))
        for name in ("refresh_interval", "warmup_epochs", "seed"):
            object.__setattr__(self, name, int(getattr(self, name)))

    def with_overrides(self, **overrides) -> "SchedulerConfig":
        """Copy with flat overrides; ``easy_above``/``hard_below`` reach into ``thresholds``."""
        thr = {}
        for key in ("easy_above", "hard_below"):
            if key in overrides:
                thr[key] = overrides.pop(key)
        unknown = set(overrides) - {f.name for f in fields(self)}
        if unknown:
            raise ValidationError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        if thr:
            overrides["thresholds"] = replace(self.thresholds, **thr)
        return replace(self, **overrides)


@dataclass(frozen=True)
class EpochPlan:
    """The images selected for one epoch, split by the rule that selected them.

    Each origin is a tuple of ids in ascending order; the five origins are
    pairwise disjoint.
    """

    epoch: int
    forced_review: tuple = ()
    random_easy: tuple = ()
    forced_coverage: tuple = ()
    random_moderate: tuple = ()
    hard: tuple = ()

    def __post_init__(self):
        groups = self.groups()
        total = sum(len(g) for _, g in groups)
        union = set().union(*(g for _, g in groups))
        if len(union) != total:
            raise ValidationError(f"epoch {self.epoch} plan has overlapping origin sets")

    def groups(self) -> tuple[tuple[str, tuple], ...]:
        return tuple(zip(ORIGIN_TAGS, (self.forced_review, self.random_easy, self.forced_coverage,
                                       self.random_moderate, self.hard)))

    @property
    def omega(self) -> frozenset:
        return frozenset().union(self.forced_review, self.random_easy, self.forced_coverage,
                                 self.random_moderate, self.hard)

    def __len__(self) -> int:
        return sum(len(g) for _, g in self.groups())


@lru_cache(maxsize=None)
def _exact(fraction: float) -> Fraction:
    # Fraction(str(x)) keeps 0.29 * 100 == 29 instead of 28.999...
    return Fraction(str(fraction))


def floor_fraction(fraction: float, count: int) -> int:
    return math.floor(_exact(fraction) * count)


def easy_budget(n_easy: int, fraction: float = 0.02) -> int:
    """Easy images to train this epoch: ``max(1, floor(fraction * n))``, or 0 for an empty pool."""
    return max(1, floor_fraction(fraction, n_easy)) if n_easy else 0


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; same inputs, same stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def epoch_rng(seed: int, t: int) -> np.random.Generator:
    """The generator :func:`compose_plan` uses for epoch ``t`` when none is passed."""
    return derive_rng(seed, SCHEDULER_STREAM, t)


def _draw(pool: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    if k <= 0:
        return pool[:0]
    picked = pool[rng.choice(len(pool), size=k, replace=False)]
    picked.sort()
    return picked


def _staleness(table: StateTable, rows: np.ndarray, t: int) -> np.ndarray:
    return (t - 1) - table.last_used[rows]


def stale_easy(table: StateTable, easy: np.ndarray, t: int, review_staleness: int | float = 10) -> np.ndarray:
    """Rows of ``easy`` unused for at least ``review_staleness`` completed epochs."""
    return easy[_staleness(table, easy, t) >= review_staleness]


def forced_moderate(table: StateTable, moderate: np.ndarray, t: int, coverage_staleness: int | float = 3) -> np.ndarray:
    return moderate[_staleness(table, moderate, t) >= coverage_staleness]


def select_easy(table: StateTable, easy: np.ndarray, t: int, cfg: SchedulerConfig,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Pick the forced-review and random-easy rows for epoch ``t``.

    Any shortfall in forced review is handed to the random draw, so the two
    together always fill the budget when the pool allows it.
    """
    budget = easy_budget(len(easy), cfg.easy_budget_fraction)
    if not budget:
        return easy[:0], easy[:0]
    cap = floor_fraction(cfg.forced_review_cap_fraction, budget)
    stale = stale_easy(table, easy, t, cfg.review_staleness)
    n_forced = min(cap, len(stale))
    if cfg.forced_review_policy is ForcedReviewPolicy.STALENESS_PRIORITY:
        # stale is id-ascending; a stable sort on -staleness breaks ties by id
        order = np.argsort(-_staleness(table, stale, t), kind="stable")
        forced = np.sort(stale[order[:n_forced]])
    else:
        forced = _draw(stale, n_forced, rng)
    rest = np.setdiff1d(easy, forced, assume_unique=True)
    n_random = min(budget - n_forced, len(rest))
    return forced, _draw(rest, n_random, rng)


def select_moderate(moderate: np.ndarray, forced: np.ndarray, cfg: SchedulerConfig,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Top the forced-coverage rows up to ``moderate_fraction`` of the pool.

    Forced rows are never trimmed, so the selection may exceed the target.
    """
    target = floor_fraction(cfg.moderate_fraction, len(moderate))
    n_random = max(0, target - len(forced))
    rest = np.setdiff1d(moderate, forced, assume_unique=True)
    return forced, _draw(rest, min(n_random, len(rest)), rng)


@dataclass(frozen=True)
class PlanRows:
    """Row-index form of an :class:`EpochPlan` (what the simulator consumes)."""

    epoch: int
    forced_review: np.ndarray
    random_easy: np.ndarray
    forced_coverage: np.ndarray
    random_moderate: np.ndarray
    hard: np.ndarray
    n_easy: int
    n_moderate: int
    n_hard: int

    def selected(self) -> np.ndarray:
        return np.concatenate([self.forced_review, self.random_easy, self.forced_coverage,
                               self.random_moderate, self.hard])

    def to_plan(self, table: StateTable) -> EpochPlan:
        ids = table.ids
        return EpochPlan(
            self.epoch,
            *(tuple(ids[i] for i in rows) for rows in (
                self.forced_review, self.random_easy, self.forced_coverage,
                self.random_moderate, self.hard)),
        )


def compose_rows(table: StateTable, cfg: SchedulerConfig, t: int,
                 rng: np.random.Generator | None = None) -> PlanRows:
    if t != table.epoch + 1:
        raise ValidationError(f"cannot plan epoch {t} from a table at epoch {table.epoch}")
    if rng is None:
        rng = epoch_rng(cfg.seed, t)
    easy, moderate, hard = partition_indices(table, cfg.thresholds, cfg.metric_kind)
    forced_review, random_easy = select_easy(table, easy, t, cfg, rng)
    forced_cov = forced_moderate(table, moderate, t, cfg.coverage_staleness)
    forced_cov, random_mod = select_moderate(moderate, forced_cov, cfg, rng)
    return PlanRows(t, forced_review, random_easy, forced_cov, random_mod, hard,
                    len(easy), len(moderate), len(hard))


def compose_plan(table: StateTable, cfg: SchedulerConfig, t: int,
                 rng: np.random.Generator | None = None) -> EpochPlan:
    """Build the training set for epoch ``t`` (which must be ``table.epoch + 1``).

    Without an explicit ``rng`` the draws come from :func:`epoch_rng` on
    ``cfg.seed``, so a snapshot plus its config fully determines the plan.
    """
    return compose_rows(table, cfg, t, rng).to_plan(table)
