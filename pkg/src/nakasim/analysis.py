"""Estimators and checkers: growth rate, stay-above walks, Nakamoto intervals,
persistence, block classification, race dependence and tail-decay fits."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from ._jit import njit
from .adversary import honest_survivors, run_fast, schedule_violations, STRATEGY_CODES
from .arrivals import (
    ArrivalTrace, BlockTypeSpec, Origin, adversary_rate, derive_seed, generate_typed_trace,
    honest_growth_bound, puncture_trace, rng_for, validate_specs,
)
from .blocktree import BlockTree, FullyDelayedChain, build_fully_delayed_chain
from .errors import (
    InsufficientDataError, InvalidInputError, InvalidParameterError, InvalidQueryError,
    SegmentTooShortError,
)
from .parallel import map_trials
from .stats import Estimate, line_fit, proportion_stderr, ratio_of_sums, wilson, z_value

# --------------------------------------------------------------------------- rates


@dataclass(frozen=True)
class RateSummary:
    lambda_h: float
    lambda_a: float
    lambda_h_stderr: float
    n_renewals: int


def estimate_lambda_h(chain: FullyDelayedChain, specs: Sequence[BlockTypeSpec] | None = None) -> RateSummary:
    """Renewal-ratio estimate of the fully-delayed growth rate.

    The segment before the first gap end is dropped because it starts at
    genesis rather than at a renewal point. Any object exposing
    ``renewal_times`` and ``renewal_scores`` is accepted.
    """
    times = np.asarray(chain.renewal_times, dtype=np.float64)
    scores = np.asarray(chain.renewal_scores, dtype=np.float64)
    if times.size < 2:
        raise InsufficientDataError(f"need at least 2 renewal segments, got {times.size}")
    lam, se = ratio_of_sums(scores[1:], times[1:])
    lam_a = adversary_rate(specs) if specs is not None else 0.0
    return RateSummary(lam, lam_a, se, int(times.size - 1))


def pilot_lambda_h(specs: Sequence[BlockTypeSpec], delta: float, seed: int, n_blocks: float = 2e5) -> float:
    """lambda_h from one long honest run of roughly ``n_blocks`` arrivals."""
    bound = honest_growth_bound(specs)
    total = sum(s.honest_rate for s in specs)
    if bound <= 0 or total <= 0:
        return 0.0
    horizon = n_blocks / total
    honest = generate_typed_trace(specs, Origin.HONEST, 1, horizon, derive_seed(seed, 0xB11))
    return estimate_lambda_h(build_fully_delayed_chain(honest, delta, specs)).lambda_h


# ------------------------------------------------------------------ stay above


@dataclass(frozen=True)
class StayAboveResult:
    probability: Estimate
    side: str
    B: float
    epsilon: float
    rate: float
    threshold: float
    mean_segment_score: float
    n_segments: int


def estimate_stay_above_probability(
    specs: Sequence[BlockTypeSpec], delta: float, B: float | None, epsilon: float | None,
    n_trials: int, horizon: float, seed: int, *, side: str = "honest", lambda_h: float | None = None,
    n_miners: int = 1, confidence: float = 0.95, threads: int = 1,
) -> StayAboveResult:
    """Probability that a segment-sum walk never touches zero before the horizon.

    Honest side: punctured segments of length ``B`` (each followed by a
    ``delta``-long hole), walk increments ``S_B,i - B(lambda_h - epsilon)``.
    Adversary side: plain consecutive windows of length ``B``, increments
    ``B(lambda_a + epsilon) - S_a,i``.
    """
    validate_specs(specs)
    if side not in ("honest", "adversary"):
        raise InvalidParameterError(f"side must be 'honest' or 'adversary', got {side!r}")
    if n_trials < 1:
        raise InvalidParameterError("n_trials must be >= 1")
    lam_h = pilot_lambda_h(specs, delta, seed) if lambda_h is None else float(lambda_h)
    lam_a = adversary_rate(specs)
    if B is None:
        if lam_h <= 0:
            raise InvalidParameterError("cannot pick a default B when lambda_h is 0")
        B = 20.0 / lam_h
    if not B > 0:
        raise InvalidParameterError(f"B must be > 0, got {B}")
    rate = lam_h if side == "honest" else lam_a
    if epsilon is None:
        epsilon = 0.1 * rate
    if not epsilon > 0:
        raise InvalidParameterError(f"epsilon must be > 0, got {epsilon}")
    threshold = B * (rate - epsilon) if side == "honest" else B * (rate + epsilon)
    period = B + delta if side == "honest" else B
    n_seg = int(math.floor(horizon / period))
    if n_seg < 1:
        raise InvalidParameterError(f"horizon {horizon} holds no complete segment of length {period}")

    def trial(i: int):
        s = derive_seed(seed, i)
        if side == "honest":
            tr = generate_typed_trace(specs, Origin.HONEST, n_miners, horizon, s)
            seg = puncture_trace(tr, B, delta, specs).segment_scores[:n_seg]
            walk = np.cumsum(seg - threshold)
        else:
            tr = generate_typed_trace(specs, Origin.ADVERSARY, n_miners, horizon, s)
            edges = np.arange(n_seg + 1) * B
            cum = np.concatenate([[0.0], np.cumsum(tr.scores(specs))])
            idx = np.searchsorted(tr.times, edges, side="left")
            seg = np.diff(cum[idx])
            walk = np.cumsum(threshold - seg)
        return bool(np.all(walk > 0)), float(seg.sum()), seg.size

    results = map_trials(trial, n_trials, threads)
    wins = sum(r[0] for r in results)
    total = sum(r[1] for r in results)
    count = sum(r[2] for r in results)
    mean_seg = total / count
    if side == "honest" and mean_seg <= threshold:
        raise SegmentTooShortError(
            f"mean punctured segment score {mean_seg:.6g} does not exceed B(lambda_h - epsilon) = {threshold:.6g}; "
            "increase B"
        )
    if side == "adversary" and mean_seg >= threshold:
        raise SegmentTooShortError(
            f"mean adversary segment score {mean_seg:.6g} is not below B(lambda_a + epsilon) = {threshold:.6g}"
        )
    return StayAboveResult(wilson(wins, n_trials, confidence), side, float(B), float(epsilon), rate,
                           threshold, mean_seg, n_seg)


# ----------------------------------------------------------- Nakamoto intervals


@dataclass(frozen=True)
class NakamotoIntervalQuery:
    tau_q: float
    q: float
    delta: float

    def __post_init__(self):
        if not self.q > 0:
            raise InvalidQueryError(f"q must be > 0, got {self.q}")
        if not self.delta >= 0:
            raise InvalidQueryError(f"delta must be >= 0, got {self.delta}")
        if not self.tau_q > self.q + 2 * self.delta:
            raise InvalidQueryError(
                f"tau_q={self.tau_q} must exceed q + 2*delta = {self.q + 2 * self.delta}"
            )

    @property
    def window(self) -> tuple[float, float]:
        return self.tau_q - self.q, self.tau_q + self.q


@dataclass(frozen=True)
class IntervalVerdict:
    L_q: bool
    E1: bool
    E2_up_to_horizon: bool
    is_nakamoto_at_horizon: bool
    nakamoto_block_id: int | None
    candidate_time: float | None = None
    horizon: float = math.inf


def _adversary_cumulative(adversary: ArrivalTrace, specs) -> np.ndarray:
    return np.cumsum(adversary.scores(specs)) if len(adversary) else np.zeros(0)


def check_interval(query: NakamotoIntervalQuery, honest: ArrivalTrace, adversary: ArrivalTrace,
                   chain: FullyDelayedChain, horizon: float, specs: Sequence[BlockTypeSpec]) -> IntervalVerdict:
    """Evaluate the loner-window event and the two dominance events for one centre.

    ``chain`` must be the fully-delayed chain of ``honest``. Dominance means
    honest fresh growth strictly exceeds adversary growth, or the adversary
    grew by nothing at all on that stretch.
    """
    if not horizon > query.tau_q + query.q + 2 * query.delta:
        raise InvalidQueryError(f"horizon must exceed tau_q + q + 2*delta = "
                                f"{query.tau_q + query.q + 2 * query.delta}")
    if chain.delta != query.delta or chain.times.shape != honest.times.shape:
        raise InvalidInputError("chain was not built from this honest trace with this delta")
    L, e1, e2, j = kernels.interval_events(
        chain.times, chain.scores, chain.running_max, adversary.times, _adversary_cumulative(adversary, specs),
        float(query.delta), float(query.tau_q), float(query.q), float(horizon),
    )
    L, e1, e2 = bool(L), bool(e1), bool(e2)
    nak = L and e1 and e2
    cand = float(honest.times[j]) if j >= 0 else None
    bid = None
    if nak:
        # block ids follow merged arrival order
        bid = int(j + 1 + np.searchsorted(adversary.times, honest.times[j], side="left"))
    return IntervalVerdict(L, e1, e2, nak, bid, cand, float(horizon))


@njit
def _persists(h_time, h_miner, h_tip, desc, t0, horizon, n_miners):
    # tip of each miner as of t0, then every later change up to the horizon
    tip = np.zeros(n_miners, dtype=np.int64)
    for k in range(h_time.shape[0]):
        t = h_time[k]
        if t > horizon:
            break
        if t <= t0:
            tip[h_miner[k]] = h_tip[k]
            continue
        if not desc[h_tip[k]]:
            return False
    for m in range(n_miners):
        if not desc[tip[m]]:
            return False
    return True


def locate_honest_block(tree: BlockTree, mine_time: float) -> int:
    hits = np.flatnonzero(tree.is_honest & (tree.mine_time == mine_time))
    if hits.size != 1:
        raise InvalidInputError(f"no honest block mined at {mine_time} in this tree")
    return int(hits[0]) + 1


def verify_persistence(tree: BlockTree, verdict: IntervalVerdict, horizon: float | None = None,
                       honest: ArrivalTrace | None = None) -> bool:
    """Is the window's block on every honest miner's tip chain from the time all can see it on?

    The check starts at ``tau_j + delta``: before that the block may still be
    in flight to some miners, which no schedule can be blamed for.
    """
    if verdict.candidate_time is None:
        raise InvalidInputError("verdict has no single block in its window")
    if honest is not None:
        tree_h = tree.mine_time[tree.is_honest]
        limit = min(tree.horizon, honest.horizon)
        if not np.array_equal(tree_h[tree_h <= limit], honest.times[honest.times <= limit]):
            raise InvalidInputError("tree and honest trace disagree on honest arrivals")
    horizon = tree.horizon if horizon is None else float(horizon)
    bid = locate_honest_block(tree, verdict.candidate_time)
    desc = tree.descends_from(bid)
    t, m, tip = tree.tip_log
    return bool(_persists(t, m, tip, desc, verdict.candidate_time + tree.delta, horizon, tree.n_miners))


def _trial_traces(specs, n_miners, horizon, trial_seed):
    honest = generate_typed_trace(specs, Origin.HONEST, n_miners, horizon, trial_seed)
    adversary = generate_typed_trace(specs, Origin.ADVERSARY, n_miners, horizon, trial_seed)
    return honest, adversary


def default_tau_q(specs, delta: float, q: float) -> float:
    bound = honest_growth_bound(specs)
    return q + 2 * delta + (20.0 / bound if bound > 0 else 1.0)


@dataclass(frozen=True)
class NakamotoEstimate:
    p_joint: Estimate
    p_L: Estimate
    p_E1: Estimate
    p_E2: Estimate
    product: float
    gap: float
    gap_tolerance: float
    tau_q: float
    q: float

    @property
    def factorizes(self) -> bool:
        return abs(self.gap) <= self.gap_tolerance


def estimate_nakamoto_probability(
    specs: Sequence[BlockTypeSpec], delta: float, q: float | None, n_trials: int, horizon: float, seed: int,
    *, tau_q: float | None = None, n_miners: int = 10, confidence: float = 0.95, threads: int = 1,
) -> NakamotoEstimate:
    """Monte Carlo frequencies of L_q, E1, E2 and their conjunction at one centre."""
    validate_specs(specs)
    q = delta if q is None else float(q)
    tau_q = default_tau_q(specs, delta, q) if tau_q is None else float(tau_q)
    query = NakamotoIntervalQuery(tau_q, q, float(delta))

    def trial(i):
        honest, adversary = _trial_traces(specs, n_miners, horizon, derive_seed(seed, i))
        chain = build_fully_delayed_chain(honest, delta, specs)
        v = check_interval(query, honest, adversary, chain, horizon, specs)
        return v.L_q, v.E1, v.E2_up_to_horizon, v.is_nakamoto_at_horizon

    flags = np.array(map_trials(trial, n_trials, threads), dtype=bool).reshape(n_trials, 4)
    counts = flags.sum(axis=0)
    pL, pE1, pE2, pJ = (wilson(int(c), n_trials, confidence) for c in (counts[0], counts[1], counts[2], counts[3]))
    prod = pL.estimate * pE1.estimate * pE2.estimate
    var_prod = sum(
        (prod / p.estimate) ** 2 * proportion_stderr(p.estimate, n_trials) ** 2 if p.estimate > 0 else 0.0
        for p in (pL, pE1, pE2)
    )
    var_joint = proportion_stderr(pJ.estimate, n_trials) ** 2
    tol = z_value(confidence) * math.sqrt(var_joint + var_prod)
    return NakamotoEstimate(pJ, pL, pE1, pE2, prod, pJ.estimate - prod, tol, tau_q, q)


@dataclass(frozen=True)
class PersistenceReport:
    strategy: str
    n_trials: int
    n_flagged: int
    n_violations: int
    n_schedule_violations: int


def run_persistence_trials(
    specs: Sequence[BlockTypeSpec], delta: float, q: float | None, n_trials: int, horizon: float, seed: int,
    *, strategies: Sequence[str] = ("private-mining", "full-delay"), tau_q: float | None = None,
    n_miners: int = 10, restart_deficit: float | None = None, threads: int = 1,
) -> list[PersistenceReport]:
    """Run each strategy on the same traces and check every flagged Nakamoto block persists."""
    validate_specs(specs)
    q = delta if q is None else float(q)
    tau_q = default_tau_q(specs, delta, q) if tau_q is None else float(tau_q)
    query = NakamotoIntervalQuery(tau_q, q, float(delta))
    for s in strategies:
        if s not in STRATEGY_CODES:
            raise InvalidParameterError(f"unknown strategy {s!r}")

    def trial(i):
        honest, adversary = _trial_traces(specs, n_miners, horizon, derive_seed(seed, i))
        chain = build_fully_delayed_chain(honest, delta, specs)
        v = check_interval(query, honest, adversary, chain, horizon, specs)
        out = []
        for s in strategies:
            if not v.is_nakamoto_at_horizon:
                out.append((0, 0, 0))
                continue
            tree, _ = run_fast(s, honest, adversary, delta, horizon, specs, n_miners, restart_deficit)
            ok = verify_persistence(tree, v, horizon, honest)
            out.append((1, int(not ok), schedule_violations(tree)))
        return out

    res = np.array(map_trials(trial, n_trials, threads), dtype=np.int64).reshape(n_trials, len(strategies), 3)
    tot = res.sum(axis=0)
    return [PersistenceReport(s, n_trials, int(tot[k, 0]), int(tot[k, 1]), int(tot[k, 2]))
            for k, s in enumerate(strategies)]


# ------------------------------------------------------------- classification


class BlockClass(enum.Enum):
    SECURE = "secure"
    CONFLICTED = "conflicted"
    OVERTAKABLE = "overtakable"
    LOCALLY_INSECURE = "locally-insecure"


def _tree_streams(tree: BlockTree):
    incs = tree.chain_score - np.where(tree.parent > 0, tree.chain_score[np.maximum(tree.parent - 1, 0)], 0.0)
    h = tree.is_honest
    return tree.mine_time[h], incs[h], tree.mine_time[~h], np.cumsum(incs[~h])


def classify_block(tree: BlockTree, block_id: int, t_cap: float | None = None) -> BlockClass:
    """Security class of an honest block from the arrivals recorded in ``tree``.

    Conflicted: another honest block was mined within delta of it.
    Overtakable: from some earlier honest block (or genesis) at tau_i, the
    adversary score on (tau_i, t] reaches the fresh fully-delayed growth on
    (tau_i + delta, t - delta] at an adversary arrival t at or after the block.
    With ``t_cap`` only adversary chains spanning at most ``t_cap`` seconds
    count, and a hit is reported as LOCALLY_INSECURE.
    """
    if not 1 <= block_id < len(tree):
        raise InvalidInputError(f"block {block_id} does not exist")
    if not tree.is_honest[block_id - 1]:
        raise InvalidInputError(f"block {block_id} is an adversary block")
    h_t, h_inc, a_t, a_cum = _tree_streams(tree)
    tau = tree.mine_time[block_id - 1]
    k = int(np.searchsorted(h_t, tau))
    if (k > 0 and tau - h_t[k - 1] < tree.delta) or (k + 1 < h_t.size and h_t[k + 1] - tau < tree.delta):
        return BlockClass.CONFLICTED
    _, _, runmax = kernels.fd_chain(h_t, h_inc, tree.delta)
    lo, hi = kernels.overtake_extent(h_t, h_inc, runmax, a_t, a_cum, tree.delta,
                                     np.array([tau]), tree.horizon)
    if lo < 0:
        return BlockClass.SECURE
    if t_cap is None:
        return BlockClass.OVERTAKABLE
    return BlockClass.LOCALLY_INSECURE if lo <= t_cap else BlockClass.SECURE


# -------------------------------------------------------------------- decay fits


@dataclass(frozen=True)
class DecayFit:
    tprimes: tuple[float, ...]
    log_probs: tuple[float, ...]
    slope: float
    intercept: float
    r_squared: float
    probabilities: tuple[float, ...] = ()
    slope_ci: tuple[float, float] = (math.nan, math.nan)
    dropped: tuple[float, ...] = ()
    n_trials: int = 0

    @property
    def slope_negative(self) -> bool:
        return self.slope_ci[1] < 0


def _fit_tail(xs: np.ndarray, stat: np.ndarray, cut: np.ndarray, n_boot: int, seed: int,
              confidence: float) -> DecayFit:
    """Fit log P(stat >= cut_k) against xs_k, with a bootstrap-over-trials slope interval."""
    n = stat.size
    probs = np.array([np.mean(stat >= c) for c in cut])
    keep = probs > 0
    dropped = tuple(float(x) for x in xs[~keep])
    if keep.sum() < 2:
        raise InsufficientDataError("fewer than two lengths with a nonzero probability")
    fit = line_fit(xs[keep], np.log(probs[keep]))
    rng = rng_for(seed, 0xB007)
    slopes = []
    sorted_stat = np.sort(stat)
    for _ in range(n_boot):
        sample = np.sort(sorted_stat[rng.integers(0, n, n)])
        p = 1.0 - np.searchsorted(sample, cut, side="left") / n
        ok = p > 0
        if ok.sum() >= 2:
            slopes.append(line_fit(xs[ok], np.log(p[ok])).slope)
    alpha = 1 - confidence
    lo, hi = (np.quantile(slopes, [alpha / 2, 1 - alpha / 2]) if slopes else (math.nan, math.nan))
    return DecayFit(tuple(float(x) for x in xs[keep]), tuple(float(v) for v in np.log(probs[keep])),
                    fit.slope, fit.intercept, fit.r_squared, tuple(float(p) for p in probs),
                    (float(lo), float(hi)), dropped, n)


def _check_lengths(lengths) -> np.ndarray:
    xs = np.asarray(lengths, dtype=np.float64)
    if xs.size < 4:
        raise InvalidParameterError("at least 4 lengths are required for a decay fit")
    if np.any(np.diff(xs) <= 0) or xs[0] < 0:
        raise InvalidParameterError("lengths must be nonnegative and strictly increasing")
    return xs


def _tail_horizon(specs, delta, end: float, lam_h: float) -> float:
    lam_a = adversary_rate(specs)
    gap = lam_h - lam_a
    scale = 50.0 / gap if gap > 0 else 50.0 / max(lam_h, 1e-12)
    return end + 2 * delta + scale


def _check_tail_horizon(horizon: float, needed: float) -> None:
    if not horizon > needed:
        raise InvalidParameterError(f"horizon {horizon} must exceed {needed} to cover every window")


def estimate_no_nakamoto_decay(
    specs: Sequence[BlockTypeSpec], delta: float, q: float | None, interval_lengths: Sequence[float],
    n_trials: int, seed: int, *, start: float | None = None, horizon: float | None = None,
    n_miners: int = 10, confidence: float = 0.95, n_bootstrap: int = 400, threads: int = 1,
    lambda_h: float | None = None,
) -> DecayFit:
    """P(no Nakamoto interval among the 2q-windows tiling [start, start + t]) against t.

    Each trial evaluates every window up to the longest length once and keeps
    the index of the first Nakamoto window; the per-length probability is the
    fraction of trials whose first hit lies beyond the windows fitting in t.
    E2 is evaluated up to a horizon well past the last window.
    """
    validate_specs(specs)
    xs = _check_lengths(interval_lengths)
    q = delta if q is None else float(q)
    start = 2 * delta + 1e-9 * max(1.0, delta) if start is None else float(start)
    if start <= 2 * delta:
        raise InvalidParameterError("start must exceed 2*delta so the first window is admissible")
    lam_h = pilot_lambda_h(specs, delta, seed) if lambda_h is None else lambda_h
    n_win = np.floor(xs / (2 * q) + 1e-9).astype(np.int64)
    centers = start + q + 2 * q * np.arange(int(n_win[-1]))
    horizon = _tail_horizon(specs, delta, start + xs[-1], lam_h) if horizon is None else float(horizon)
    _check_tail_horizon(horizon, centers[-1] + q + 2 * delta)

    def trial(i):
        honest, adversary = _trial_traces(specs, n_miners, horizon, derive_seed(seed, i))
        chain = build_fully_delayed_chain(honest, delta, specs)
        L, E1, E2, _ = kernels.interval_events_many(
            chain.times, chain.scores, chain.running_max, adversary.times, _adversary_cumulative(adversary, specs),
            float(delta), centers, q, horizon,
        )
        hit = np.flatnonzero(L & E1 & E2)
        return int(hit[0]) if hit.size else int(centers.size)

    first = np.array(map_trials(trial, n_trials, threads), dtype=np.int64)
    return _fit_tail(xs, first, n_win, n_bootstrap, seed, confidence)


def estimate_overtake_decay(
    specs: Sequence[BlockTypeSpec], delta: float, window: float, tprimes: Sequence[float], n_trials: int,
    seed: int, *, start: float | None = None, horizon: float | None = None, n_miners: int = 10,
    confidence: float = 0.95, n_bootstrap: int = 400, threads: int = 1, lambda_h: float | None = None,
) -> DecayFit:
    """P(some honest block in [start, start + window) is overtaken by an adversary chain of length >= t')."""
    validate_specs(specs)
    xs = _check_lengths(tprimes)
    if not window > 0:
        raise InvalidParameterError("window must be > 0")
    lam_h = pilot_lambda_h(specs, delta, seed) if lambda_h is None else lambda_h
    if adversary_rate(specs) >= lam_h:
        raise InvalidParameterError("overtake decay needs lambda_a < lambda_h")
    start = xs[-1] + 2 * delta if start is None else float(start)
    horizon = _tail_horizon(specs, delta, start + window, lam_h) if horizon is None else float(horizon)
    _check_tail_horizon(horizon, start + window + 2 * delta)

    def trial(i):
        honest, adversary = _trial_traces(specs, n_miners, horizon, derive_seed(seed, i))
        chain = build_fully_delayed_chain(honest, delta, specs)
        lo, hi = np.searchsorted(chain.times, [start, start + window], side="left")
        targets = np.ascontiguousarray(chain.times[lo:hi])
        _, longest = kernels.overtake_extent(
            chain.times, chain.scores, chain.running_max, adversary.times,
            _adversary_cumulative(adversary, specs), float(delta), targets, horizon,
        )
        return longest

    longest = np.array(map_trials(trial, n_trials, threads), dtype=np.float64)
    # a trial with no overtake at all records -1, below every t' >= 0
    return _fit_tail(xs, longest, xs, n_bootstrap, seed, confidence)


# --------------------------------------------------------- race dependence


@dataclass(frozen=True)
class CounterexampleStats:
    p_cond: float
    p_marg: float
    n_steps: int
    ci_halfwidth: float
    p_cond_ci: tuple[float, float] = (math.nan, math.nan)
    p_marg_ci: tuple[float, float] = (math.nan, math.nan)
    confidence: float = 0.99
    n_after_honest: int = 0


def sequence_stats(x: np.ndarray, confidence: float = 0.99) -> CounterexampleStats:
    """P(X_n = -1 | X_{n-1} = +1) and P(X_n = -1) for a +-1 sequence, with Wilson intervals."""
    x = np.asarray(x)
    n = x.size
    if n < 2:
        raise InsufficientDataError("need at least 2 steps")
    after_plus = x[1:][x[:-1] == 1]
    cond = wilson(int(np.sum(after_plus == -1)), after_plus.size, confidence)
    marg = wilson(int(np.sum(x == -1)), n, confidence)
    return CounterexampleStats(
        cond.estimate if after_plus.size else 0.0, marg.estimate, int(n), max(cond.halfwidth, marg.halfwidth),
        (cond.ci_low, cond.ci_high), (marg.ci_low, marg.ci_high), confidence, int(after_plus.size),
    )


def _renewal_extensions(rng, h: float, delta: float, n: int) -> np.ndarray:
    # first extension after Exp(h); each later one needs delta of silence-free waiting plus Exp(h)
    gaps = rng.exponential(1.0 / h, size=n)
    gaps[1:] += delta
    return np.cumsum(gaps)


def _explicit_extensions(rng, h: float, delta: float, horizon: float) -> np.ndarray:
    n = rng.poisson(h * horizon)
    times = np.sort(rng.uniform(0.0, horizon, size=n))
    times = times[np.concatenate([[True], np.diff(times) > 0])] if n else times
    _, _, runmax = kernels.fd_chain(times, np.ones(times.size), float(delta))
    up = np.diff(np.concatenate([[0.0], runmax])) > 0
    return times[up]


def race_sequence(h: float, b: float, delta: float, n_steps: int, seed: int, method: str = "renewal") -> np.ndarray:
    """The first ``n_steps`` of the merged +1 (honest extension) / -1 (adversary arrival) race.

    ``renewal`` draws the extension times of the single-type fully-delayed
    chain directly (an extension is the first arrival at least delta after
    the previous one); ``explicit`` mines every honest block and reads the
    extensions off the fully-delayed chain. Both give the same law.
    """
    if not (h > 0 and delta >= 0 and b >= 0):
        raise InvalidParameterError("need h > 0, delta >= 0, b >= 0")
    if n_steps < 1:
        raise InvalidParameterError("n_steps must be >= 1")
    rng = rng_for(seed, 0xA)
    rng_a = rng_for(seed, 0xB)
    lam_h = h / (1 + delta * h)
    span = 1.2 * n_steps / (lam_h + b) + 10 * (delta + 1 / h)
    while True:
        if method == "renewal":
            ext = _renewal_extensions(rng, h, delta, int(1.2 * lam_h * span) + 64)
            while ext[-1] < span:
                more = _renewal_extensions(rng, h, delta, ext.size)
                more[0] += delta
                ext = np.concatenate([ext, ext[-1] + more])
            ext = ext[ext <= span]
        elif method == "explicit":
            ext = _explicit_extensions(rng, h, delta, span)
        else:
            raise InvalidParameterError(f"unknown method {method!r}")
        adv = np.cumsum(rng_a.exponential(1.0 / b, size=int(1.2 * b * span) + 64)) if b > 0 else np.zeros(0)
        adv = adv[adv <= span]
        if ext.size + adv.size >= n_steps:
            break
        span *= 2
        rng, rng_a = rng_for(seed, 0xA, int(span)), rng_for(seed, 0xB, int(span))
    t = np.concatenate([ext, adv])
    x = np.concatenate([np.ones(ext.size, dtype=np.int8), -np.ones(adv.size, dtype=np.int8)])
    order = np.argsort(t, kind="stable")
    return x[order][:n_steps]


def run_counterexample(h: float, b: float, delta: float, n_steps: int, seed: int, *,
                       method: str = "renewal", confidence: float = 0.99) -> CounterexampleStats:
    return sequence_stats(race_sequence(h, b, delta, n_steps, seed, method), confidence)


def counterexample_theory(h: float, b: float, delta: float) -> tuple[float, float]:
    """Exact (p_cond, p_marg) of the race: 1 - e^{-b delta} h/(h+b) and b/(b+lambda_h)."""
    lam_h = h / (1 + delta * h)
    p_cond = 1 - math.exp(-b * delta) * h / (h + b)
    return p_cond, (b / (b + lam_h) if b + lam_h > 0 else 0.0)


def iid_control(p: float, n_steps: int, seed: int, confidence: float = 0.99) -> CounterexampleStats:
    """Same estimator on an i.i.d. sequence with P(-1) = p."""
    rng = rng_for(seed, 0x11D)
    x = np.where(rng.random(n_steps) < p, -1, 1).astype(np.int8)
    return sequence_stats(x, confidence)


# ------------------------------------------------------------- attack sweeps


@dataclass(frozen=True)
class AttackPoint:
    ratio: float
    lambda_a: float
    success: Estimate
    zero_survivors: Estimate


def _adversary_profile(specs: Sequence[BlockTypeSpec], lam_h: float) -> list[BlockTypeSpec]:
    """Specs whose adversary rates keep the configured mix but total lambda_a = lambda_h."""
    w = np.array([s.adversary_rate for s in specs])
    if w.sum() == 0:
        w = np.array([s.honest_rate for s in specs])
    c = np.array([s.score for s in specs])
    scale = lam_h / float(np.dot(c, w))
    return [BlockTypeSpec(s.type_id, s.score, s.honest_rate, float(wi * scale)) for s, wi in zip(specs, w)]


def scale_trace(trace: ArrivalTrace, rate_factor: float, horizon: float) -> ArrivalTrace:
    """Speed a trace up by ``rate_factor`` (times divided) and cut it at ``horizon``."""
    t = trace.times / rate_factor
    keep = t <= horizon
    return ArrivalTrace(t[keep], trace.type_ids[keep], trace.origins[keep], trace.miner_ids[keep], horizon, trace.seed)


def run_phase_diagram(
    specs: Sequence[BlockTypeSpec], delta: float, ratios: Sequence[float], n_trials: int, seed: int, *,
    horizon: float | None = None, n_miners: int = 10, strategy: str = "private-mining",
    restart_deficit: float | None = None, lambda_h: float | None = None, confidence: float = 0.95,
    threads: int = 1,
) -> list[AttackPoint]:
    """Attack success against lambda_a / lambda_h on common random numbers.

    Every ratio reuses each trial's honest trace and one adversary trace at
    ratio 1, sped up by the ratio, so a larger ratio only ever brings
    adversary blocks earlier. Success is a domination event before the
    horizon; ``zero_survivors`` counts trials where no honest block from the
    first half of the horizon is on the final canonical chain.
    """
    validate_specs(specs)
    ratios = [float(r) for r in ratios]
    if not ratios or any(r <= 0 for r in ratios):
        raise InvalidParameterError("ratios must be a nonempty list of positive numbers")
    lam_h = pilot_lambda_h(specs, delta, seed) if lambda_h is None else float(lambda_h)
    horizon = 1e4 / lam_h if horizon is None else float(horizon)
    unit = _adversary_profile(specs, lam_h)
    r_max = max(ratios)

    def trial(i):
        s = derive_seed(seed, i)
        honest = generate_typed_trace(specs, Origin.HONEST, n_miners, horizon, s)
        base = generate_typed_trace(unit, Origin.ADVERSARY, n_miners, horizon * r_max, s)
        out = []
        for r in ratios:
            adv = scale_trace(base, r, horizon)
            tree, outcome = run_fast(strategy, honest, adv, delta, horizon, specs, n_miners, restart_deficit)
            out.append((outcome.dominated_at is not None, honest_survivors(tree, horizon / 2) == 0))
        return out

    res = np.array(map_trials(trial, n_trials, threads), dtype=bool).reshape(n_trials, len(ratios), 2)
    cnt = res.sum(axis=0)
    return [AttackPoint(r, r * lam_h, wilson(int(cnt[k, 0]), n_trials, confidence),
                        wilson(int(cnt[k, 1]), n_trials, confidence)) for k, r in enumerate(ratios)]


def run_private_attack(
    specs: Sequence[BlockTypeSpec], delta: float, horizon: float, n_trials: int, seed: int, *,
    n_miners: int = 10, restart_deficit: float | None = None, confidence: float = 0.95, threads: int = 1,
    lambda_h: float | None = None,
) -> AttackPoint:
    """Private mining at the configured adversary rates."""
    validate_specs(specs)
    lam_h = pilot_lambda_h(specs, delta, seed) if lambda_h is None else float(lambda_h)

    def trial(i):
        honest, adversary = _trial_traces(specs, n_miners, horizon, derive_seed(seed, i))
        tree, outcome = run_fast("private-mining", honest, adversary, delta, horizon, specs, n_miners,
                                 restart_deficit)
        return outcome.dominated_at is not None, honest_survivors(tree, horizon / 2) == 0

    res = np.array(map_trials(trial, n_trials, threads), dtype=bool).reshape(n_trials, 2)
    lam_a = adversary_rate(specs)
    return AttackPoint(lam_a / lam_h if lam_h > 0 else math.inf, lam_a,
                       wilson(int(res[:, 0].sum()), n_trials, confidence),
                       wilson(int(res[:, 1].sum()), n_trials, confidence))
