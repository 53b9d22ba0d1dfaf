"""Violation counters for the three chain-growth properties on one random world.

Each function builds a tree from ``random_world(seed)`` and returns how many
of ``n_times`` sampled checks failed, so property tests can assert zero and
the acceptance run can total them across many schedules.
"""

import numpy as np

from nakasim.blocktree import (
    ALL, DelaySchedule, block_ids, build_fully_delayed_chain, canonical_score, highest_honest_score, score_growth,
)

from schedules import SPECS, private_parents, random_world, tree_of

HORIZON = 30.0


def ordering_violations(seed: int, n_times: int, delta: float = 1.0) -> int:
    """Fully-delayed score is a lower bound for any schedule, and for the common view a delta later."""
    h, a, sched, parents, rng = random_world(seed, horizon=HORIZON, delta=delta)
    tree = tree_of(h, a, sched, parents, delta)
    chain = build_fully_delayed_chain(h, delta, SPECS)
    bad = 0
    for t in rng.uniform(0, HORIZON, n_times):
        bad += highest_honest_score(tree, t) < chain.score_at(t)
        bad += canonical_score(tree, t, ALL) < chain.score_at(t - delta)
    return int(bad)


def removal_violations(seed: int, n_times: int, delta: float = 1.0) -> int:
    """Dropping one honest block never raises any chain score, given private adversary parents."""
    h, a, sched, _, rng = random_world(seed, horizon=HORIZON, delta=delta)
    if len(h) == 0:
        return 0
    merged, hid, _ = block_ids(h, a)
    parents = private_parents(merged, rng)
    full = tree_of(h, a, sched, parents, delta)
    k = int(rng.integers(len(h)))
    r = int(hid[k])
    keep = np.ones(len(h), dtype=bool)
    keep[k] = False
    rows = np.arange(len(merged)) != r - 1
    sched2 = DelaySchedule(sched.honest_delays[rows], sched.adversary_release[rows], sched.adversary_delays[rows])
    parents2 = [p - 1 if p > r else p for p in parents]
    reduced = tree_of(h.select(keep), a, sched2, parents2, delta)
    bad = 0
    for t in rng.uniform(0, HORIZON, n_times):
        bad += canonical_score(reduced, t, ALL) > canonical_score(full, t, ALL)
        bad += highest_honest_score(reduced, t) > highest_honest_score(full, t)
        for m in range(full.n_miners):
            bad += canonical_score(reduced, t, m) > canonical_score(full, t, m)
    return int(bad)


def additivity_violations(seed: int, n_times: int, delta: float = 1.0) -> int:
    """Common-view score at y is at least its value at x plus fully-delayed growth on (x+delta, y-delta].

    Both the global growth S(y-delta) - S(x+delta) and the growth of a chain
    started fresh at x + delta are checked.
    """
    h, a, sched, parents, rng = random_world(seed, horizon=HORIZON, delta=delta)
    tree = tree_of(h, a, sched, parents, delta)
    chain = build_fully_delayed_chain(h, delta, SPECS)
    t1 = rng.uniform(0, HORIZON - 2 * delta, n_times)
    t2 = np.minimum(t1 + 2 * delta + rng.exponential(6.0, n_times), HORIZON)
    bad = 0
    for x, y in zip(t1, t2):
        if y < x + 2 * delta:
            continue
        c1, c2 = canonical_score(tree, x), canonical_score(tree, y)
        bad += c2 < score_growth(chain, x + delta, y - delta) + c1 - 1e-9
        bad += c2 < chain.fresh_growth(x + delta, y - delta) + c1 - 1e-9
    return int(bad)
