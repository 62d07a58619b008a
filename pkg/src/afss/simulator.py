"""Synthetic learner that closes the loop around the scheduler.

Each image has a fixed difficulty and a latent skill. Training an image
closes part of its remaining gap, ``skill += rate * (1 - difficulty) * (1 - skill)``;
an idle image decays geometrically, ``skill *= 1 - forget_rate``. Evaluation
reads precision and recall as skill plus bounded uniform noise.

Cost is counted in image-visits: one per image per epoch it is trained, and
evaluation visits are kept in a separate ledger.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from afss.errors import ValidationError
from afss.scheduler import SchedulerConfig, compose_rows, derive_rng
from afss.state_store import (
    StateTable,
    apply_metrics_arrays,
    init_state,
    is_refresh_epoch,
    partition_indices,
)
from afss.sufficiency import sufficiency_many

EVAL_STREAM = 1
POLICY_STREAM = 2
DATASET_STREAM = 3

# (fraction, (low, high)) difficulty components of the default synthetic mix
DEFAULT_MIX = (
    (0.5, (0.05, 0.30)),
    (0.3, (0.30, 0.60)),
    (0.2, (0.60, 0.90)),
)


@dataclass(frozen=True)
class LearnerDynamics:
    learn_rate: float = 0.15
    forget_rate: float = 0.01
    noise_scale: float = 0.03

    def __post_init__(self):
        for name in ("learn_rate", "forget_rate", "noise_scale"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValidationError(f"{name} must lie in [0, 1), got {value}")
        if not self.forget_rate < self.learn_rate:
            raise ValidationError("forget_rate must be below learn_rate")


@dataclass(frozen=True)
class SyntheticImage:
    image_id: int
    difficulty: float
    skill: float = 0.0


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """Difficulty and skill arrays aligned with ``ids`` (``0..n-1``)."""

    ids: tuple
    difficulty: np.ndarray
    skill: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    def images(self) -> list[SyntheticImage]:
        return [SyntheticImage(i, float(d), float(s)) for i, d, s in zip(self.ids, self.difficulty, self.skill)]

    def with_skill(self, skill: np.ndarray) -> "SyntheticDataset":
        return SyntheticDataset(self.ids, self.difficulty, skill)


def generate_dataset(n: int, difficulty_mix: Sequence = DEFAULT_MIX, seed: int = 0) -> SyntheticDataset:
    """Draw ``n`` images whose difficulties follow ``difficulty_mix``.

    Component sizes are exact (largest-remainder rounding of ``fraction * n``);
    difficulties are uniform within each component's range and the
    components are shuffled across ids.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValidationError(f"n must be a positive integer, got {n!r}")
    mix = [(float(frac), (float(lo), float(hi))) for frac, (lo, hi) in difficulty_mix]
    if not mix or abs(sum(frac for frac, _ in mix) - 1.0) > 1e-9:
        raise ValidationError("difficulty mix fractions must sum to 1")
    for frac, (lo, hi) in mix:
        if frac < 0 or not 0.0 <= lo <= hi <= 1.0:
            raise ValidationError(f"bad mix component {(frac, (lo, hi))!r}")
    n = int(n)
    raw = [frac * n for frac, _ in mix]
    counts = [math.floor(x) for x in raw]
    by_remainder = sorted(range(len(mix)), key=lambda j: (-(raw[j] - counts[j]), j))
    for j in by_remainder[: n - sum(counts)]:
        counts[j] += 1
    rng = derive_rng(seed, DATASET_STREAM)
    parts = [rng.uniform(lo, hi, size=c) for c, (_, (lo, hi)) in zip(counts, mix)]
    difficulty = rng.permutation(np.concatenate(parts))
    return SyntheticDataset(tuple(range(n)), difficulty, np.zeros(n))


def learner_step(dataset: SyntheticDataset, trained, dyn: LearnerDynamics) -> SyntheticDataset:
    """Advance every image by one epoch.

    ``trained`` is a boolean mask or an array of row indices (ids equal rows
    for generated datasets).
    """
    mask = _as_mask(trained, len(dataset))
    skill = dataset.skill
    gained = skill + dyn.learn_rate * (1.0 - dataset.difficulty) * (1.0 - skill)
    decayed = skill * (1.0 - dyn.forget_rate)
    return dataset.with_skill(np.clip(np.where(mask, gained, decayed), 0.0, 1.0))


def _as_mask(selection, n: int) -> np.ndarray:
    selection = np.asarray(selection)
    if selection.dtype == bool:
        return selection
    mask = np.zeros(n, dtype=bool)
    mask[selection.astype(np.int64)] = True
    return mask


def evaluate(skill: float, dyn: LearnerDynamics, rng: np.random.Generator) -> tuple[float, float]:
    """Noisy ``(precision, recall)`` reading of one image."""
    noise = rng.uniform(-dyn.noise_scale, dyn.noise_scale, size=2) if dyn.noise_scale else (0.0, 0.0)
    return (float(np.clip(skill + noise[0], 0.0, 1.0)), float(np.clip(skill + noise[1], 0.0, 1.0)))


def evaluate_many(skill: np.ndarray, dyn: LearnerDynamics, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`evaluate`; noise is drawn as one ``(n, 2)`` block."""
    skill = np.asarray(skill, dtype=np.float64)
    if dyn.noise_scale:
        noise = rng.uniform(-dyn.noise_scale, dyn.noise_scale, size=(skill.shape[0], 2))
    else:
        noise = np.zeros((skill.shape[0], 2))
    return np.clip(skill + noise[:, 0], 0.0, 1.0), np.clip(skill + noise[:, 1], 0.0, 1.0)


# ---------------------------------------------------------------------------
# sampling policies


@dataclass(frozen=True)
class AFSS:
    name = "afss"


@dataclass(frozen=True)
class FullCoverage:
    name = "full"


@dataclass(frozen=True)
class RandomSubset:
    p: float = 0.5
    name = "random"

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValidationError(f"RandomSubset fraction must lie in (0, 1], got {self.p}")


@dataclass(frozen=True)
class StaticPrune:
    """Train everything until ``prune_epoch``, then drop images scoring above ``threshold`` for good."""

    threshold: float = 0.85
    prune_epoch: int = 20
    name = "prune"


@dataclass(frozen=True)
class Curriculum:
    """Admit the easiest ``t / ramp_epochs`` share of images (by difficulty), growing to all.

    ``ramp_epochs=None`` ramps over the whole run.
    """

    ramp_epochs: int | None = None
    name = "curriculum"

    def __post_init__(self):
        if self.ramp_epochs is not None and self.ramp_epochs < 1:
            raise ValidationError("ramp_epochs must be >= 1")


SamplingPolicy = AFSS | FullCoverage | RandomSubset | StaticPrune | Curriculum


class EvalAccounting(str, enum.Enum):
    """How a refresh pass is scoped and charged.

    ``FULL`` re-evaluates every image on every refresh epoch. ``RECENT``
    re-evaluates only images trained since the previous refresh; the rest
    keep their stored metrics.
    """

    FULL = "full"
    RECENT = "recent"


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    images_used: int
    cum_visits: int
    cum_eval_visits: int
    n_easy: int
    n_moderate: int
    n_hard: int
    mean_skill: float
    mean_sufficiency: float


REPORT_COLUMNS = tuple(EpochRow.__dataclass_fields__)


@dataclass(frozen=True)
class ExperimentReport:
    policy: str
    n: int
    epochs: int
    seed: int
    rows: tuple[EpochRow, ...]
    final_skill: np.ndarray = field(repr=False)

    @property
    def image_visit_total(self) -> int:
        return self.rows[-1].cum_visits

    @property
    def evaluation_visit_total(self) -> int:
        return self.rows[-1].cum_eval_visits

    @property
    def final_mean_skill(self) -> float:
        return float(self.final_skill.mean())

    @property
    def accuracy_proxy(self) -> float:
        """Mean noise-free learning sufficiency at the end of training (P = R = skill)."""
        return self.final_mean_skill

    @property
    def visit_reduction(self) -> float:
        """Share of FullCoverage's training visits (``n * epochs``) that were skipped."""
        return 1.0 - self.image_visit_total / (self.n * self.epochs)

    @property
    def speedup(self) -> float:
        return self.n * self.epochs / self.image_visit_total

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows])

    def summary(self) -> str:
        return (
            f"policy={self.policy} n={self.n} epochs={self.epochs} seed={self.seed} "
            f"visits={self.image_visit_total} eval_visits={self.evaluation_visit_total} "
            f"accuracy_proxy={self.accuracy_proxy:.6f} visit_reduction={self.visit_reduction:.4f} "
            f"speedup={self.speedup:.3f}x"
        )


def _selector(policy, dataset: SyntheticDataset, cfg: SchedulerConfig, seed: int, epochs: int):
    """Return ``select(table, t) -> row indices`` for a policy; may keep per-run state."""
    n = len(dataset)
    all_rows = np.arange(n)

    if isinstance(policy, AFSS):
        def select(table, t):
            return compose_rows(table, cfg, t).selected()
    elif isinstance(policy, FullCoverage):
        def select(table, t):
            return all_rows
    elif isinstance(policy, RandomSubset):
        k = max(1, math.floor(policy.p * n))

        def select(table, t):
            rows = derive_rng(seed, POLICY_STREAM, t).choice(n, size=k, replace=False)
            rows.sort()
            return rows
    elif isinstance(policy, StaticPrune):
        kept = {"rows": all_rows}

        def select(table, t):
            if t == policy.prune_epoch:
                score = sufficiency_many(table.precision, table.recall, cfg.metric_kind)
                kept["rows"] = np.flatnonzero(score <= policy.threshold)
            return kept["rows"]
    elif isinstance(policy, Curriculum):
        order = np.lexsort((all_rows, dataset.difficulty))
        ramp = policy.ramp_epochs or epochs

        def select(table, t):
            k = math.ceil(n * min(1.0, t / ramp))
            return np.sort(order[:k])
    else:
        raise ValidationError(f"unknown sampling policy {policy!r}")
    return select


def run_experiment(
    policy,
    dataset: SyntheticDataset,
    epochs: int,
    cfg: SchedulerConfig | None = None,
    dyn: LearnerDynamics | None = None,
    seed: int = 0,
    eval_accounting: EvalAccounting = EvalAccounting.FULL,
) -> ExperimentReport:
    """Simulate ``epochs`` training epochs under ``policy``.

    ``seed`` replaces ``cfg.seed`` so scheduler and evaluation streams come
    from one master seed. Metrics are refreshed on the scheduler's cadence
    for every policy, which keeps tier populations comparable across
    policies and lets StaticPrune read sufficiency scores.
    """
    cfg = replace(cfg or SchedulerConfig(), seed=seed)
    dyn = dyn or LearnerDynamics()
    eval_accounting = EvalAccounting(eval_accounting)
    if epochs < cfg.warmup_epochs:
        raise ValidationError(f"epochs ({epochs}) must be at least warmup_epochs ({cfg.warmup_epochs})")
    n = len(dataset)
    table = init_state(range(n), cfg.warmup_epochs)
    if table.ids != dataset.ids:
        raise ValidationError("dataset ids must be 0..n-1")
    select = _selector(policy, dataset, cfg, seed, epochs)
    data = dataset.with_skill(np.zeros(n))
    since_refresh = np.zeros(n, dtype=bool)
    cum_visits = cum_eval = 0
    rows = []
    for t in range(1, epochs + 1):
        easy, moderate, hard = partition_indices(table, cfg.thresholds, cfg.metric_kind)
        chosen = select(table, t)
        last_used = table.last_used.copy()
        last_used[chosen] = t
        table = table.replace(last_used=last_used, epoch=t)
        mask = _as_mask(chosen, n)
        data = learner_step(data, mask, dyn)
        since_refresh |= mask
        cum_visits += len(chosen)
        if is_refresh_epoch(t, cfg.warmup_epochs, cfg.refresh_interval):
            scope = np.arange(n) if eval_accounting is EvalAccounting.FULL else np.flatnonzero(since_refresh)
            precision, recall = evaluate_many(data.skill[scope], dyn, derive_rng(seed, EVAL_STREAM, t))
            table = apply_metrics_arrays(table, scope, precision, recall)
            cum_eval += len(scope)
            since_refresh[:] = False
        rows.append(EpochRow(
            epoch=t,
            images_used=len(chosen),
            cum_visits=cum_visits,
            cum_eval_visits=cum_eval,
            n_easy=len(easy),
            n_moderate=len(moderate),
            n_hard=len(hard),
            mean_skill=float(data.skill.mean()),
            mean_sufficiency=float(sufficiency_many(table.precision, table.recall, cfg.metric_kind).mean()),
        ))
    return ExperimentReport(policy.name, n, epochs, seed, tuple(rows), data.skill)


SWEEP_PARAMETERS = ("review_staleness", "coverage_staleness", "refresh_interval", "easy_above", "hard_below")


def sweep(
    parameter: str,
    values: Sequence,
    base_cfg: SchedulerConfig | None = None,
    dataset: SyntheticDataset | None = None,
    epochs: int = 200,
    dyn: LearnerDynamics | None = None,
    seed: int = 0,
    policy=None,
    eval_accounting: EvalAccounting = EvalAccounting.FULL,
) -> list[ExperimentReport]:
    """One AFSS run per value of ``parameter``, all on the same seed and dataset."""
    parameter = parameter.replace("-", "_")
    if parameter not in SWEEP_PARAMETERS:
        raise ValidationError(f"cannot sweep {parameter!r}; choose from {', '.join(SWEEP_PARAMETERS)}")
    base_cfg = base_cfg or SchedulerConfig()
    dataset = dataset if dataset is not None else generate_dataset(1000, seed=seed)
    policy = policy or AFSS()
    return [
        run_experiment(policy, dataset, epochs, base_cfg.with_overrides(**{parameter: value}), dyn, seed,
                       eval_accounting)
        for value in values
    ]
