"""Naive, dictionary-based transcription of the epoch selection rules.

Written independently of ``afss.scheduler``: it shares only numpy's draw
primitive and the documented draw conventions (pools sorted by id,
``rng.choice(len(pool), k, replace=False)``, no draw for k == 0, draw order
forced review -> random easy -> random moderate).
"""

from decimal import ROUND_FLOOR, Decimal

import numpy as np


def floor_of(fraction, count):
    return int((Decimal(str(fraction)) * count).to_integral_value(rounding=ROUND_FLOOR))


def sufficiency(p, r, kind):
    if kind == "f1":
        return 0.0 if p + r == 0 else min(1.0, 2 * p * r / (p + r))
    return min(p, r)


def level(score, easy_above, hard_below):
    if score > easy_above:
        return "easy"
    if hard_below <= score <= easy_above:
        return "moderate"
    return "hard"


def randsample(pool, k, rng):
    pool = sorted(pool)
    if k == 0:
        return set()
    picks = rng.choice(len(pool), size=k, replace=False)
    return {pool[i] for i in picks}


def naive_plan(records, t, cfg, rng):
    """``records`` maps id -> (precision, recall, last_used). Returns origin -> set of ids."""
    easy_above = cfg["easy_above"]
    hard_below = cfg["hard_below"]
    d1, d2, d3 = set(), set(), set()
    for image_id, (p, r, ep) in records.items():
        tier = level(sufficiency(p, r, cfg["metric_kind"]), easy_above, hard_below)
        {"easy": d1, "moderate": d2, "hard": d3}[tier].add(image_id)

    # continuous review
    a_t = {i for i in d1 if t - 1 - records[i][2] >= cfg["review_staleness"]}
    if d1:
        budget = max(1, floor_of(cfg["easy_budget_fraction"], len(d1)))
    else:
        budget = 0
    e1 = min(floor_of(cfg["forced_review_cap_fraction"], budget), len(a_t))
    if cfg["forced_review_policy"] == "staleness_priority":
        ranked = sorted(a_t, key=lambda i: (-(t - 1 - records[i][2]), i))
        a_prime = set(ranked[:e1])
    else:
        a_prime = randsample(a_t, e1, rng)
    remaining_easy = d1 - a_prime
    e2 = min(budget - e1, len(remaining_easy))
    a_r = randsample(remaining_easy, e2, rng)

    # short-term coverage
    b_f = {i for i in d2 if t - 1 - records[i][2] >= cfg["coverage_staleness"]}
    m1 = max(0, floor_of(cfg["moderate_fraction"], len(d2)) - len(b_f))
    remaining_mod = d2 - b_f
    b_r = randsample(remaining_mod, min(m1, len(remaining_mod)), rng)

    return {"FR": a_prime, "RE": a_r, "FC": b_f, "RM": b_r, "HD": d3}


def records_of(table):
    return {
        image_id: (float(p), float(r), int(ep))
        for image_id, p, r, ep in zip(table.ids, table.precision, table.recall, table.last_used)
    }


def cfg_dict(cfg):
    return {
        "easy_budget_fraction": cfg.easy_budget_fraction,
        "forced_review_cap_fraction": cfg.forced_review_cap_fraction,
        "review_staleness": cfg.review_staleness,
        "moderate_fraction": cfg.moderate_fraction,
        "coverage_staleness": cfg.coverage_staleness,
        "easy_above": cfg.thresholds.easy_above,
        "hard_below": cfg.thresholds.hard_below,
        "metric_kind": cfg.metric_kind.value,
        "forced_review_policy": cfg.forced_review_policy.value,
    }


def plan_sets(plan):
    return {tag: set(ids) for tag, ids in plan.groups()}


def epoch_generator(seed, t):
    return np.random.default_rng(np.random.SeedSequence([seed, 0, t]))
