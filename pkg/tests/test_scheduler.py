import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afss.errors import ValidationError
from afss.scheduler import (
    EpochPlan,
    ForcedReviewPolicy,
    SchedulerConfig,
    compose_plan,
    easy_budget,
    floor_fraction,
    select_easy,
    select_moderate,
)
from afss.state_store import StateTable, apply_usage, init_state, partition

from .oracle import cfg_dict, epoch_generator, naive_plan, plan_sets, records_of
from .tables import random_table


def _easy_table(n_easy, n_stale, t):
    """All-easy table where the first ``n_stale`` images were last used long ago."""
    last_used = np.full(n_easy, t - 1, dtype=np.int64)
    last_used[:n_stale] = 0
    ones = np.ones(n_easy)
    return StateTable(tuple(range(n_easy)), ones, ones, last_used, epoch=t - 1)


@pytest.mark.parametrize("n_easy, n_stale, e1, e2", [(1000, 30, 10, 10), (1000, 4, 4, 16), (49, 49, 0, 1)])
def test_easy_split(n_easy, n_stale, e1, e2):
    t = 20
    table = _easy_table(n_easy, n_stale, t)
    rows = np.arange(n_easy)
    forced, rand = select_easy(table, rows, t, SchedulerConfig(), np.random.default_rng(0))
    assert (len(forced), len(rand)) == (e1, e2)
    assert set(forced) <= set(range(n_stale))
    assert not set(forced) & set(rand)


@pytest.mark.parametrize("n, expected", [(0, 0), (1, 1), (49, 1), (50, 1), (100, 2), (1000, 20), (1049, 20)])
def test_easy_budget(n, expected):
    assert easy_budget(n) == expected


def test_floor_is_exact():
    # 0.29 * 100 is 28.999999999999996 in binary floating point
    assert floor_fraction(0.29, 100) == 29
    assert floor_fraction(0.4, 5) == 2


@pytest.mark.parametrize("n_forced, expected_random", [(50, 150), (250, 0), (200, 0), (0, 200)])
def test_moderate_top_up(n_forced, expected_random):
    moderate = np.arange(500)
    forced = moderate[:n_forced]
    kept, rand = select_moderate(moderate, forced, SchedulerConfig(), np.random.default_rng(1))
    assert len(kept) == n_forced  # never trimmed
    assert len(rand) == expected_random
    assert not set(kept) & set(rand)


def test_warmup_plans_everything():
    table = init_state(range(50))
    cfg = SchedulerConfig()
    for t in range(1, 6):
        plan = compose_plan(table, cfg, t)
        assert plan.hard == table.ids and len(plan) == 50
        table = apply_usage(table, plan, t)


def test_plan_epoch_must_follow_table():
    with pytest.raises(ValidationError):
        compose_plan(init_state(range(5)), SchedulerConfig(), 3)


def test_plan_rejects_overlap():
    with pytest.raises(ValidationError):
        EpochPlan(1, forced_review=(1,), hard=(1,))


def test_same_seed_same_plan():
    table = random_table(np.random.default_rng(3), 400, epoch=30)
    cfg = SchedulerConfig(seed=11)
    assert compose_plan(table, cfg, 31) == compose_plan(table, cfg, 31)
    other = compose_plan(table, cfg.with_overrides(seed=12), 31)
    assert other.hard == compose_plan(table, cfg, 31).hard


def test_staleness_priority_takes_oldest():
    t = 40
    n = 1000
    last_used = np.full(n, t - 1, dtype=np.int64)
    last_used[:30] = np.arange(30)  # staleness 39 down to 10
    ones = np.ones(n)
    table = StateTable(tuple(range(n)), ones, ones, last_used, epoch=t - 1)
    cfg = SchedulerConfig(forced_review_policy=ForcedReviewPolicy.STALENESS_PRIORITY)
    plan = compose_plan(table, cfg, t)
    assert plan.forced_review == tuple(range(10))


def test_staleness_priority_ties_broken_by_id():
    t = 40
    ones = np.ones(200)
    last_used = np.full(200, t - 1, dtype=np.int64)
    last_used[[150, 20, 90, 7]] = 5
    table = StateTable(tuple(range(200)), ones, ones, last_used, epoch=t - 1)
    cfg = SchedulerConfig(forced_review_policy="staleness_priority", easy_budget_fraction=0.02)
    assert compose_plan(table, cfg, t).forced_review == (7, 20)


def test_infinite_review_staleness_disables_forced_review():
    table = _easy_table(1000, 1000, 50)
    plan = compose_plan(table, SchedulerConfig(review_staleness=math.inf), 50)
    assert plan.forced_review == () and len(plan.random_easy) == 20


def test_config_validation_and_overrides():
    cfg = SchedulerConfig().with_overrides(easy_above=0.9, review_staleness=12)
    assert cfg.thresholds.easy_above == 0.9 and cfg.review_staleness == 12
    with pytest.raises(ValidationError):
        SchedulerConfig().with_overrides(nonsense=1)
    for bad in ({"easy_budget_fraction": 0}, {"refresh_interval": 0}, {"review_staleness": 2.5}, {"seed": -1}):
        with pytest.raises(ValidationError):
            SchedulerConfig(**bad)


@settings(max_examples=150, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    k=st.integers(1, 400),
    epoch=st.integers(5, 60),
    policy=st.sampled_from(list(ForcedReviewPolicy)),
    kind=st.sampled_from(["min_pr", "f1"]),
    review=st.sampled_from([1, 3, 10, math.inf]),
    coverage=st.sampled_from([1, 3, 7, math.inf]),
)
def test_matches_oracle(seed, k, epoch, policy, kind, review, coverage):
    table = random_table(np.random.default_rng(seed), k, epoch, string_ids=seed % 2 == 0)
    cfg = SchedulerConfig(seed=seed, forced_review_policy=policy, metric_kind=kind,
                          review_staleness=review, coverage_staleness=coverage)
    t = epoch + 1
    got = plan_sets(compose_plan(table, cfg, t))
    expected = naive_plan(records_of(table), t, cfg_dict(cfg), epoch_generator(seed, t))
    assert got == expected


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 400), epoch=st.integers(5, 60))
def test_moderate_gap_is_bounded(seed, k, epoch):
    """Fed its own plans, no moderate image goes more than coverage_staleness epochs unused."""
    cfg = SchedulerConfig(seed=seed)
    table = random_table(np.random.default_rng(seed), k, epoch)
    table = table.replace(last_used=np.full(k, epoch, dtype=np.int64))
    for t in range(epoch + 1, epoch + 15):
        plan = compose_plan(table, cfg, t)
        _, moderate, _ = partition(table)
        for image_id in moderate:
            gap = t - 1 - table.record(image_id).last_used_epoch
            assert gap <= cfg.coverage_staleness
        table = apply_usage(table, plan, t)


def test_staleness_priority_gap_bound():
    """While |A_t| fits the forced-review capacity, staleness stays below r + ceil(|D1| / E1)."""
    n, review = 200, 3
    cfg = SchedulerConfig(easy_budget_fraction=0.1, review_staleness=review,
                          forced_review_policy=ForcedReviewPolicy.STALENESS_PRIORITY)
    ones = np.ones(n)
    table = StateTable(tuple(range(n)), ones, ones, np.zeros(n, dtype=np.int64), epoch=5)
    capacity = floor_fraction(0.5, easy_budget(n, 0.1))
    bound = review + math.ceil(n / capacity)
    for t in range(6, 200):
        staleness = t - 1 - table.last_used
        assert staleness.max() <= bound
        plan = compose_plan(table, cfg, t)
        assert len(plan.forced_review) == min(capacity, int(np.sum(staleness >= review)))
        table = apply_usage(table, plan, t)


def test_uniform_review_reaches_every_stale_image():
    n, t = 1000, 30
    last_used = np.full(n, t - 1, dtype=np.int64)
    stale = np.arange(0, 900, 30)  # 30 stale images, forced-review capacity 10
    last_used[stale] = 2
    ones = np.ones(n)
    table = StateTable(tuple(range(n)), ones, ones, last_used, epoch=t - 1)
    hits = np.zeros(n, dtype=np.int64)
    trials = 1000
    for seed in range(trials):
        plan = compose_plan(table, SchedulerConfig(seed=seed), t)
        assert set(plan.forced_review) <= set(stale.tolist())
        hits[list(plan.forced_review)] += 1
    # each stale image is forced with probability 1/3; sd of the rate ~0.015
    rates = hits[stale] / trials
    assert rates.min() > 0.25 and rates.max() < 0.42
