"""Mother tree under a delay schedule, and the fictitious fully-delayed honest chain."""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .arrivals import ArrivalTrace, BlockTypeSpec, Origin, merge_traces
from .errors import InvalidIntervalError, InvalidScheduleError, ScheduleIncompleteError

ALL = "all"
GENESIS = 0
# Slack for float noise when checking delay bounds (delays are derived by subtraction).
_DELAY_TOL = 1e-9


@dataclass(frozen=True)
class Block:
    block_id: int
    parent_id: int | None
    type_id: int | None
    origin: Origin | None
    miner_id: int
    mine_time: float
    chain_score: float


@dataclass(frozen=True, eq=False)
class DelaySchedule:
    """Per-block delays, rows indexed by block id - 1 in merged arrival order.

    ``honest_delays[j, m]`` is the delay of honest block j to miner m (NaN on
    adversary rows). ``adversary_release[j]`` is the time from mining to first
    broadcast (may be inf) and ``adversary_delays[j, m]`` the further delay to
    each miner; both are NaN on honest rows.
    """

    honest_delays: np.ndarray
    adversary_release: np.ndarray
    adversary_delays: np.ndarray

    @property
    def n_miners(self) -> int:
        return self.honest_delays.shape[1]

    @property
    def n_blocks(self) -> int:
        return self.honest_delays.shape[0]

    @classmethod
    def uniform(cls, is_honest: np.ndarray, n_miners: int, honest_delay: float,
                release: float = np.inf, adversary_delay: float = 0.0) -> "DelaySchedule":
        is_honest = np.asarray(is_honest, dtype=bool)
        n = is_honest.size
        hd = np.where(is_honest[:, None], honest_delay, np.nan) * np.ones((n, n_miners))
        rel = np.where(is_honest, np.nan, release)
        ad = np.where(is_honest[:, None], np.nan, adversary_delay) * np.ones((n, n_miners))
        return cls(hd, rel, ad)


def visibility_matrix(arrivals: ArrivalTrace, schedule: DelaySchedule, delta: float) -> np.ndarray:
    """First time each block is visible to each honest miner, validating the schedule."""
    n = len(arrivals)
    if schedule.n_blocks != n:
        raise ScheduleIncompleteError(f"schedule covers {schedule.n_blocks} blocks, tree has {n}")
    honest = arrivals.origins == Origin.HONEST
    hd = schedule.honest_delays[honest]
    if np.any(np.isnan(hd)):
        raise ScheduleIncompleteError("missing honest delay entries")
    if np.any(hd < 0) or np.any(hd > delta + _DELAY_TOL):
        raise InvalidScheduleError(f"honest delays must lie in [0, {delta}]")
    rel = schedule.adversary_release[~honest]
    ad = schedule.adversary_delays[~honest]
    if np.any(np.isnan(rel)) or np.any(np.isnan(ad)):
        raise ScheduleIncompleteError("missing adversary release entries")
    if np.any(rel < 0) or np.any(ad < 0) or np.any(ad > delta + _DELAY_TOL):
        raise InvalidScheduleError(f"adversary delays after first broadcast must lie in [0, {delta}]")
    vis = np.empty((n, schedule.n_miners))
    t = arrivals.times[:, None]
    vis[honest] = t[honest] + hd
    vis[~honest] = t[~honest] + rel[:, None] + ad
    own = np.flatnonzero(honest)
    vis[own, arrivals.miner_ids[own]] = arrivals.times[own]
    return vis


def _sorted_deliveries(vis: np.ndarray, horizon: float):
    blocks, miners = np.nonzero(vis <= horizon)
    times = vis[blocks, miners]
    order = np.lexsort((miners, blocks, times))
    return times[order], blocks[order].astype(np.int64), miners[order].astype(np.int64)


@dataclass(frozen=True, eq=False)
class BlockTree:
    """All blocks ever mined, with per-miner first-visible times.

    Arrays are indexed by ``block_id - 1``; genesis (id 0) is implicit with
    score 0 and is visible to everyone at time 0.
    """

    parent: np.ndarray
    chain_score: np.ndarray
    origin: np.ndarray
    type_id: np.ndarray
    miner_id: np.ndarray
    mine_time: np.ndarray
    visibility: np.ndarray
    delta: float
    horizon: float

    def __len__(self) -> int:
        return self.parent.shape[0] + 1

    @property
    def n_miners(self) -> int:
        return self.visibility.shape[1]

    @property
    def is_honest(self) -> np.ndarray:
        return self.origin == Origin.HONEST

    def block(self, block_id: int) -> Block:
        if block_id == GENESIS:
            return Block(0, None, None, None, -1, 0.0, 0.0)
        j = block_id - 1
        return Block(block_id, int(self.parent[j]), int(self.type_id[j]), Origin(int(self.origin[j])),
                     int(self.miner_id[j]), float(self.mine_time[j]), float(self.chain_score[j]))

    def __iter__(self) -> Iterator[Block]:
        for b in range(len(self)):
            yield self.block(b)

    def visible(self, block_id: int, miner: int) -> float:
        return 0.0 if block_id == GENESIS else float(self.visibility[block_id - 1, miner])

    def score_of(self, block_id: int) -> float:
        return 0.0 if block_id == GENESIS else float(self.chain_score[block_id - 1])

    @cached_property
    def _deliveries(self):
        return _sorted_deliveries(self.visibility, self.horizon)

    @cached_property
    def tip_log(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(time, miner, tip id) for every fork-choice change up to the horizon."""
        d_time, d_block, d_miner = self._deliveries
        return kernels.tip_history(self.chain_score, d_time, d_block, d_miner, self.n_miners)

    def tip_at(self, miner: int, t: float) -> int:
        """Fork-choice tip of ``miner`` at ``t`` recomputed from the visibility map."""
        seen = np.flatnonzero(self.visibility[:, miner] <= t)
        if seen.size == 0:
            return GENESIS
        scores = self.chain_score[seen]
        top = scores.max()
        if top <= 0:
            return GENESIS
        return int(seen[np.flatnonzero(scores == top)[0]]) + 1

    def ancestors(self, block_id: int) -> list[int]:
        out = []
        b = block_id
        while b != GENESIS:
            out.append(b)
            b = int(self.parent[b - 1])
        out.append(GENESIS)
        return out

    def descends_from(self, target: int) -> np.ndarray:
        """Boolean array over block ids: does that block's chain contain ``target``?"""
        return kernels.descends_from(self.parent, int(target))

    def canonical_tip(self, t: float | None = None) -> int:
        """Highest-score block already visible to every honest miner at ``t``."""
        t = self.horizon if t is None else t
        ok = np.flatnonzero(self.visibility.max(axis=1) <= t)
        if ok.size == 0:
            return GENESIS
        scores = self.chain_score[ok]
        return int(ok[np.argmax(scores)]) + 1

    def honest_on_chain(self, tip: int) -> int:
        return int(kernels.count_on_path(self.parent, self.is_honest, int(tip)))

    def dumps(self) -> str:
        buf = io.StringIO()
        dump_tree(self, buf)
        return buf.getvalue()


def dump_tree(tree: BlockTree, out) -> None:
    """``block_id<TAB>parent_id<TAB>origin<TAB>type_id<TAB>mine_time<TAB>chain_score``."""
    out.write("0\t-\tgenesis\t-\t0.000000000\t0\n")
    names = {Origin.HONEST: "honest", Origin.ADVERSARY: "adversary"}
    for j in range(len(tree) - 1):
        out.write(
            f"{j + 1}\t{tree.parent[j]}\t{names[Origin(int(tree.origin[j]))]}\t{tree.type_id[j]}\t"
            f"{tree.mine_time[j]:.9f}\t{tree.chain_score[j]:.9g}\n"
        )


def block_ids(honest: ArrivalTrace, adversary: ArrivalTrace | None = None) -> tuple[ArrivalTrace, np.ndarray, np.ndarray]:
    """Merged arrival order and the block ids assigned to honest and adversary arrivals."""
    if adversary is None or len(adversary) == 0:
        merged = honest
        return merged, np.arange(1, len(honest) + 1), np.zeros(0, dtype=np.int64)
    merged = merge_traces(honest, adversary)
    is_adv = merged.origins == Origin.ADVERSARY
    ids = np.arange(1, len(merged) + 1)
    return merged, ids[~is_adv], ids[is_adv]


def build_tree(honest: ArrivalTrace, adversary: ArrivalTrace | None, adversary_parents: Sequence[int] | None,
               schedule: DelaySchedule, delta: float, specs: Sequence[BlockTypeSpec],
               horizon: float | None = None) -> BlockTree:
    """Grow the mother tree under a fully specified delay schedule.

    Honest blocks attach to the highest chain-score block their miner can see
    at mining time (ties: lower id; a block delivered exactly at that time
    counts as visible). ``adversary_parents[k]`` is the parent id chosen for
    the k-th adversary arrival and must refer to a block mined earlier.
    """
    merged, _, adv_ids = block_ids(honest, adversary)
    horizon = merged.horizon if horizon is None else horizon
    n = len(merged)
    is_honest = merged.origins == Origin.HONEST
    adv_parent = np.full(n, -1, dtype=np.int64)
    if len(adv_ids):
        if adversary_parents is None or len(adversary_parents) != len(adv_ids):
            raise ScheduleIncompleteError("one parent is required per adversary block")
        parents = np.asarray(adversary_parents, dtype=np.int64)
        if np.any(parents < 0) or np.any(parents >= adv_ids):
            raise InvalidScheduleError("adversary blocks must extend a block mined before them")
        adv_parent[adv_ids - 1] = parents
    vis = visibility_matrix(merged, schedule, delta)
    incs = merged.scores(specs)
    d_time, d_block, d_miner = _sorted_deliveries(vis, np.inf)
    parent, chain = kernels.build_with_visibility(
        merged.times, is_honest, merged.miner_ids, incs, adv_parent, d_time, d_block, d_miner, schedule.n_miners
    )
    return BlockTree(parent, chain, merged.origins.copy(), merged.type_ids.copy(), merged.miner_ids.copy(),
                     merged.times.copy(), vis, float(delta), float(horizon))


def canonical_score(tree: BlockTree, t: float, miner_id: int | str = ALL) -> float:
    """Honest progress at ``t``.

    With ``ALL``: score of the highest-score honest block visible to every
    honest miner. With a miner index: score of that miner's fork-choice tip.
    """
    if t < 0:
        raise InvalidIntervalError(f"t must be >= 0, got {t}")
    if miner_id == ALL:
        ok = tree.is_honest & (tree.visibility.max(axis=1) <= t)
    else:
        ok = tree.visibility[:, int(miner_id)] <= t
    return float(tree.chain_score[ok].max()) if ok.any() else 0.0


def highest_honest_score(tree: BlockTree, t: float) -> float:
    """Score of the best honest block mined by ``t``, whoever can see it."""
    ok = tree.is_honest & (tree.mine_time <= t)
    return float(tree.chain_score[ok].max()) if ok.any() else 0.0


@dataclass(frozen=True, eq=False)
class FullyDelayedChain:
    """Fictitious honest tree where every block reaches the others exactly delta late."""

    times: np.ndarray
    scores: np.ndarray
    parent: np.ndarray
    chain_score: np.ndarray
    running_max: np.ndarray
    gap_ends: np.ndarray
    delta: float
    horizon: float

    @cached_property
    def blocks(self) -> np.ndarray:
        """Honest arrival indices on the best chain, oldest first."""
        if self.chain_score.size == 0:
            return np.zeros(0, dtype=np.int64)
        b = int(np.argmax(self.chain_score)) + 1
        path = []
        while b:
            path.append(b - 1)
            b = int(self.parent[b - 1])
        return np.asarray(path[::-1], dtype=np.int64)

    def score_at(self, t):
        """S(t): best chain score among blocks mined by ``t`` (right-continuous)."""
        t = np.asarray(t, dtype=np.float64)
        k = np.searchsorted(self.times, t, side="right") - 1
        vals = np.where(k >= 0, self.running_max[np.maximum(k, 0)] if self.times.size else 0.0, 0.0)
        return float(vals) if vals.ndim == 0 else vals

    @cached_property
    def renewal_times(self) -> np.ndarray:
        """T(0) from genesis to the first gap end, then T(n) between consecutive gap ends."""
        return np.diff(np.concatenate([[0.0], self.gap_ends]))

    @cached_property
    def renewal_scores(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self.score_at(self.gap_ends)]))

    def fresh_growth(self, a: float, b: float) -> float:
        """Score of a fully-delayed tree started afresh at ``a`` from arrivals in (a, b]."""
        if a > b:
            raise InvalidIntervalError(f"a={a} > b={b}")
        g, local_total, _, _ = kernels.fresh_sync(self.times, self.scores, self.delta, float(a))
        return float(kernels.fresh_growth(self.times, self.scores, self.running_max, self.delta,
                                          float(a), float(b), g, local_total))


def build_fully_delayed_chain(honest: ArrivalTrace, delta: float, specs: Sequence[BlockTypeSpec]) -> FullyDelayedChain:
    if delta < 0:
        raise InvalidScheduleError(f"delta must be >= 0, got {delta}")
    if np.any(honest.origins != Origin.HONEST):
        raise InvalidScheduleError("the fully-delayed chain is built from honest arrivals only")
    scores = honest.scores(specs)
    parent, chain, runmax = kernels.fd_chain(honest.times, scores, float(delta))
    gaps = kernels.gap_flags(honest.times, float(delta), float(honest.horizon))
    return FullyDelayedChain(honest.times, scores, parent, chain, runmax, honest.times[gaps] + delta,
                             float(delta), float(honest.horizon))


def score_growth(chain: FullyDelayedChain, a: float, b: float) -> float:
    """S_h(a, b) = S(b) - S(a) on the given fully-delayed chain."""
    if a > b:
        raise InvalidIntervalError(f"a={a} > b={b}")
    return chain.score_at(b) - chain.score_at(a)


def adversary_score_growth(adversary: ArrivalTrace, a: float, b: float, specs: Sequence[BlockTypeSpec]) -> float:
    """S_a(a, b): total score of adversary arrivals in (a, b]."""
    if a > b:
        raise InvalidIntervalError(f"a={a} > b={b}")
    lo, hi = np.searchsorted(adversary.times, [a, b], side="right")
    return float(adversary.scores(specs)[lo:hi].sum())


def find_loners(honest: ArrivalTrace, delta: float) -> np.ndarray:
    """Indices of honest arrivals with no other honest arrival in (t - delta, t + delta)."""
    t = honest.times
    if t.size == 0:
        return np.zeros(0, dtype=np.int64)
    gaps = np.diff(t)
    before = np.concatenate([[np.inf], gaps]) >= delta
    after = np.concatenate([gaps, [np.inf]]) >= delta
    return np.flatnonzero(before & after)
