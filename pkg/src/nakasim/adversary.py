"""Attack strategies: who the adversary builds on and when blocks reach honest miners."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from ._jit import njit
from .arrivals import ArrivalTrace, BlockTypeSpec, Origin, derive_seed, generate_typed_trace, merge_traces
from .blocktree import BlockTree
from .errors import InvalidParameterError, InvalidScheduleError

STRATEGY_CODES = {"none": 0, "full-delay": 1, "private-mining": 2}
_DELAY_TOL = 1e-9


@dataclass(frozen=True)
class AttackOutcome:
    dominated_at: float | None
    reveal_times: tuple[float, ...]
    final_honest_blocks_in_chain: int


class RaceView:
    """What the adversary knows while the run is in progress.

    It sees every block the moment it is mined, plus each honest miner's
    current fork-choice tip. Arrays only cover blocks created so far.
    """

    def __init__(self, n_max: int, n_miners: int, delta: float):
        self.n = 0
        self.parent = np.zeros(n_max, dtype=np.int64)
        self.chain = np.zeros(n_max)
        self.origin = np.zeros(n_max, dtype=np.int8)
        self.mine_time = np.zeros(n_max)
        self.vis = np.full((n_max, n_miners), np.inf)
        self.best_score = np.zeros(n_miners)
        self.best_id = np.zeros(n_miners, dtype=np.int64)
        self.top_honest = 0.0
        self.top_honest_id = 0
        self.top_all = 0.0
        self.top_all_id = 0
        self.delta = delta
        self.now = 0.0

    @property
    def n_miners(self) -> int:
        return self.best_id.shape[0]

    def score(self, block_id: int) -> float:
        return 0.0 if block_id == 0 else float(self.chain[block_id - 1])

    def unreleased(self, block_id: int) -> bool:
        return block_id > 0 and math.isinf(self.vis[block_id - 1].min())


class AttackStrategy:
    """Base policy. Subclasses override the three hooks; all must be non-anticipating.

    ``honest_delays`` returns per-miner delays in [0, delta] for a freshly
    mined honest block. ``adversary_parent`` returns the parent id for a new
    adversary block, or None to skip mining it. ``adversary_release`` returns
    per-miner visibility delays (relative to now, inf = withheld) for that new
    block. ``after_event`` may release withheld blocks: it returns a list of
    ``(block_id, per-miner delays)`` whose finite entries are applied from now.
    """

    name = "base"

    def honest_delays(self, view: RaceView, block_id: int, miner: int) -> np.ndarray:
        raise NotImplementedError

    def adversary_parent(self, view: RaceView) -> int | None:
        raise NotImplementedError

    def adversary_release(self, view: RaceView, block_id: int) -> np.ndarray:
        return np.full(view.n_miners, np.inf)

    def after_event(self, view: RaceView) -> list[tuple[int, np.ndarray]]:
        return []


class NullStrategy(AttackStrategy):
    """Adversary idle, network instantaneous."""

    name = "none"

    def honest_delays(self, view, block_id, miner):
        return np.zeros(view.n_miners)

    def adversary_parent(self, view):
        return None


class FullDelayStrategy(AttackStrategy):
    """Hold every honest block back the full delta and mine on the best block in sight.

    Each adversary block is leaked at once to a single honest miner (round
    robin) and reaches the rest delta later, which splits honest effort.
    """

    name = "full-delay"

    def __init__(self):
        self._count = 0

    def honest_delays(self, view, block_id, miner):
        d = np.full(view.n_miners, view.delta)
        d[miner] = 0.0
        return d

    def adversary_parent(self, view):
        return view.top_all_id

    def adversary_release(self, view, block_id):
        d = np.full(view.n_miners, view.delta)
        d[self._count % view.n_miners] = 0.0
        self._count += 1
        return d


class PrivateMiningStrategy(FullDelayStrategy):
    """Grow one hidden chain; publish it whenever it outscores every honest block.

    With ``restart_deficit`` set, a private chain trailing the best honest
    block by more than that score is abandoned for the honest tip.
    """

    name = "private-mining"

    def __init__(self, restart_deficit: float | None = None):
        super().__init__()
        self.restart_deficit = math.inf if restart_deficit is None else float(restart_deficit)
        self.tip = 0

    def adversary_parent(self, view):
        if self.restart_deficit < math.inf and view.top_honest - view.score(self.tip) > self.restart_deficit:
            self.tip = view.top_honest_id
        return self.tip

    def adversary_release(self, view, block_id):
        self.tip = block_id
        return np.full(view.n_miners, np.inf)

    def after_event(self, view):
        if not view.unreleased(self.tip) or view.score(self.tip) <= view.top_honest:
            return []
        out = []
        b = self.tip
        while view.unreleased(b):
            out.append((b, np.zeros(view.n_miners)))
            b = int(view.parent[b - 1])
        return out


def make_strategy(name: str, restart_deficit: float | None = None) -> AttackStrategy:
    if name == "none":
        return NullStrategy()
    if name == "full-delay":
        return FullDelayStrategy()
    if name == "private-mining":
        return PrivateMiningStrategy(restart_deficit)
    raise InvalidParameterError(f"unknown strategy {name!r}; expected one of {sorted(STRATEGY_CODES)}")


def _deliver(view: RaceView, b: int, m: int) -> None:
    s = view.chain[b]
    if s > view.best_score[m] or (s == view.best_score[m] and b + 1 < view.best_id[m]):
        view.best_score[m] = s
        view.best_id[m] = b + 1


def _apply(view: RaceView, pending: list, b: int, delays: np.ndarray, t: float, after_first: bool) -> None:
    delays = np.asarray(delays, dtype=np.float64)
    if delays.shape != (view.n_miners,) or np.any(np.isnan(delays)) or np.any(delays < 0):
        raise InvalidScheduleError(f"block {b + 1}: need {view.n_miners} nonnegative delays")
    finite = delays[np.isfinite(delays)]
    if after_first and finite.size and finite.max() - finite.min() > view.delta + _DELAY_TOL:
        raise InvalidScheduleError(f"block {b + 1}: spread of delays after first broadcast exceeds delta")
    for m in range(view.n_miners):
        d = delays[m]
        if not math.isfinite(d):
            continue
        when = t + d
        if when >= view.vis[b, m]:
            continue
        view.vis[b, m] = when
        if d == 0.0:
            _deliver(view, b, m)
        else:
            heapq.heappush(pending, (when, b, m))


def run_with_strategy(strategy: AttackStrategy, honest: ArrivalTrace, adversary: ArrivalTrace,
                      delta: float, horizon: float, specs: Sequence[BlockTypeSpec],
                      n_miners: int | None = None) -> tuple[BlockTree, AttackOutcome]:
    """Event-driven run consulting ``strategy`` at every arrival (reference implementation).

    Deliveries due at the current time are applied before a block mined at
    that time picks its parent (closed visibility boundary); among equal
    times, earlier-created blocks are delivered first.
    """
    merged = merge_traces(honest, adversary) if len(adversary) else honest
    merged = merged.truncate(horizon) if merged.horizon > horizon else merged
    if n_miners is None:
        hm = honest.miner_ids
        n_miners = int(hm.max()) + 1 if hm.size else 1
    n = len(merged)
    incs = merged.scores(specs)
    view = RaceView(n, n_miners, float(delta))
    pending: list = []
    for e in range(n):
        t = float(merged.times[e])
        view.now = t
        j = view.n
        while pending and (pending[0][0] < t or (pending[0][0] == t and pending[0][1] < j)):
            when, b, m = heapq.heappop(pending)
            if view.vis[b, m] == when:
                _deliver(view, b, m)
        honest_block = merged.origins[e] == Origin.HONEST
        if honest_block:
            par = int(view.best_id[merged.miner_ids[e]])
        else:
            par = strategy.adversary_parent(view)
            if par is None:
                continue
            if not 0 <= par <= j:
                raise InvalidScheduleError(f"adversary parent {par} does not exist yet")
        view.n += 1
        view.parent[j] = par
        view.chain[j] = view.score(par) + incs[e]
        view.origin[j] = merged.origins[e]
        view.mine_time[j] = t
        s = view.chain[j]
        if s > view.top_all:
            view.top_all, view.top_all_id = s, j + 1
        if honest_block:
            if s > view.top_honest:
                view.top_honest, view.top_honest_id = s, j + 1
            miner = int(merged.miner_ids[e])
            d = np.asarray(strategy.honest_delays(view, j + 1, miner), dtype=np.float64)
            if d.shape != (n_miners,) or np.any(np.isnan(d)) or np.any(d < 0) or np.any(d > delta + _DELAY_TOL):
                raise InvalidScheduleError(f"honest block {j + 1}: delays must lie in [0, {delta}]")
            d = d.copy()
            d[miner] = 0.0
            _apply(view, pending, j, d, t, after_first=False)
        else:
            _apply(view, pending, j, strategy.adversary_release(view, j + 1), t, after_first=True)
        for b, delays in strategy.after_event(view):
            if not view.unreleased(b):
                raise InvalidScheduleError(f"block {b} released twice")
            _apply(view, pending, b - 1, delays, t, after_first=True)
    k = view.n
    # recover which arrivals produced blocks, in creation order
    created_times = view.mine_time[:k]
    idx = np.searchsorted(merged.times, created_times)
    tree = BlockTree(view.parent[:k].copy(), view.chain[:k].copy(), view.origin[:k].copy(),
                     merged.type_ids[idx].copy(), merged.miner_ids[idx].copy(), created_times.copy(),
                     view.vis[:k].copy(), float(delta), float(horizon))
    return tree, outcome_of(tree)


def run_fast(strategy: str, honest: ArrivalTrace, adversary: ArrivalTrace, delta: float, horizon: float,
             specs: Sequence[BlockTypeSpec], n_miners: int, restart_deficit: float | None = None
             ) -> tuple[BlockTree, AttackOutcome]:
    """Compiled equivalent of ``run_with_strategy`` for the built-in strategies."""
    if strategy not in STRATEGY_CODES:
        raise InvalidParameterError(f"unknown strategy {strategy!r}")
    merged = merge_traces(honest, adversary) if len(adversary) else honest
    merged = merged.truncate(horizon) if merged.horizon > horizon else merged
    deficit = math.inf if restart_deficit is None else float(restart_deficit)
    created, parent, chain, vis, reveals, dom = kernels.race(
        merged.times, merged.origins == Origin.HONEST, merged.miner_ids, merged.scores(specs),
        int(n_miners), float(delta), STRATEGY_CODES[strategy], deficit,
    )
    tree = BlockTree(parent, chain, merged.origins[created].copy(), merged.type_ids[created].copy(),
                     merged.miner_ids[created].copy(), merged.times[created].copy(), vis,
                     float(delta), float(horizon))
    outcome = AttackOutcome(None if dom < 0 else float(dom), tuple(float(x) for x in reveal_times(tree)),
                            tree.honest_on_chain(tree.canonical_tip()))
    return tree, outcome


@njit
def _first_domination(parent, chain, is_adv, h_time, h_miner, h_tip, n_miners):
    """First tip switch onto an adversary block whose chain skips the miner's previous tip."""
    cur = np.zeros(n_miners, dtype=np.int64)
    for k in range(h_time.shape[0]):
        m = h_miner[k]
        new = h_tip[k]
        old = cur[m]
        cur[m] = new
        if new == 0 or not is_adv[new - 1] or new == old:
            continue
        if kernels.skips_tip(parent, chain, new, old):
            return h_time[k]
    return -1.0


def dominated_at(tree: BlockTree) -> float | None:
    t, m, tip = tree.tip_log
    when = _first_domination(tree.parent, tree.chain_score, tree.origin == Origin.ADVERSARY, t, m, tip,
                             tree.n_miners)
    return None if when < 0 else float(when)


def reveal_times(tree: BlockTree) -> np.ndarray:
    """Distinct times at which withheld adversary blocks were first broadcast."""
    adv = tree.origin == Origin.ADVERSARY
    first = tree.visibility[adv].min(axis=1) if adv.any() else np.zeros(0)
    withheld = np.isfinite(first) & (first > tree.mine_time[adv])
    return np.unique(first[withheld])


def outcome_of(tree: BlockTree) -> AttackOutcome:
    return AttackOutcome(dominated_at(tree), tuple(float(x) for x in reveal_times(tree)),
                         tree.honest_on_chain(tree.canonical_tip()))


def honest_survivors(tree: BlockTree, mined_by: float, t: float | None = None) -> int:
    """Honest blocks mined by ``mined_by`` that sit on the canonical chain at ``t``."""
    tip = tree.canonical_tip(t)
    flags = tree.is_honest & (tree.mine_time <= mined_by)
    return int(kernels.count_on_path(tree.parent, flags, tip))


def schedule_violations(tree: BlockTree) -> int:
    """Count visibility entries that break the delta bound (0 for any legal run)."""
    vis = tree.visibility
    tol = tree.delta + _DELAY_TOL
    bad = 0
    h = tree.is_honest
    if h.any():
        lag = vis[h] - tree.mine_time[h][:, None]
        bad += int(np.sum((lag < 0) | (lag > tol) | ~np.isfinite(lag)))
        own = vis[np.flatnonzero(h), tree.miner_id[h]]
        bad += int(np.sum(own != tree.mine_time[h]))
    a = ~h
    if a.any():
        va = vis[a]
        first = va.min(axis=1)
        released = np.isfinite(first)
        bad += int(np.sum(first[released] < tree.mine_time[a][released]))
        spread = va[released] - first[released][:, None]
        bad += int(np.sum(spread > tol))
    return bad


def run_private_mining(specs: Sequence[BlockTypeSpec], delta: float, horizon: float, seed: int,
                       n_miners: int = 10, restart_deficit: float | None = None) -> AttackOutcome:
    """Private-mining attack on fresh traces drawn from ``seed``."""
    if not horizon > 0:
        raise InvalidParameterError(f"horizon must be > 0, got {horizon}")
    honest = generate_typed_trace(specs, Origin.HONEST, n_miners, horizon, derive_seed(seed, 0))
    adversary = generate_typed_trace(specs, Origin.ADVERSARY, n_miners, horizon, derive_seed(seed, 1))
    return run_fast("private-mining", honest, adversary, delta, horizon, specs, n_miners, restart_deficit)[1]


__all__ = [
    "AttackOutcome", "AttackStrategy", "FullDelayStrategy", "NullStrategy", "PrivateMiningStrategy",
    "RaceView", "STRATEGY_CODES", "dominated_at", "honest_survivors", "make_strategy", "outcome_of",
    "reveal_times", "run_fast", "run_private_mining", "run_with_strategy", "schedule_violations",
]
