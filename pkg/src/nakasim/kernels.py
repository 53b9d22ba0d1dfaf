"""Inner loops that dominate runtime.

Every function here sticks to the numba nopython subset: numpy arrays,
scalars and plain loops. Block indices inside kernels are 0-based positions
in the creation order; the public block id is ``index + 1`` with 0 reserved
for genesis. Score comparisons use exact float equality for ties, which is
well defined because chain scores are sums of the same per-type constants.
"""

import numpy as np

from ._jit import njit

NEVER = np.inf


@njit
def fd_chain(times, incs, delta):
    """Fully-delayed tree over honest arrivals.

    A block mined at ``t`` sees exactly the blocks with ``t_k + delta <= t``.
    Returns parent ids (0 = genesis), chain scores and the running maximum of
    chain scores (the step function S(t) sampled at each arrival).
    """
    n = times.shape[0]
    parent = np.zeros(n, dtype=np.int64)
    chain = np.zeros(n, dtype=np.float64)
    runmax = np.zeros(n, dtype=np.float64)
    p = 0
    best = 0.0
    best_id = 0
    top = 0.0
    for j in range(n):
        t = times[j]
        while p < j and times[p] + delta <= t:
            if chain[p] > best:
                best = chain[p]
                best_id = p + 1
            p += 1
        parent[j] = best_id
        chain[j] = best + incs[j]
        if chain[j] > top:
            top = chain[j]
        runmax[j] = top
    return parent, chain, runmax


@njit
def gap_flags(times, delta, horizon):
    """Mark blocks followed by no other arrival within ``delta`` (a Delta-gap).

    The last block only counts when its gap closes inside the horizon.
    """
    n = times.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for k in range(n):
        if k + 1 < n:
            out[k] = times[k + 1] > times[k] + delta
        else:
            out[k] = times[k] + delta <= horizon
    return out


@njit
def step_value(times, values, x):
    """Right-continuous step function: value at the last time <= x, else 0."""
    k = np.searchsorted(times, x, side="right") - 1
    if k < 0:
        return 0.0
    return values[k]


@njit
def fresh_sync(times, incs, delta, a):
    """Fresh fully-delayed tree over arrivals after ``a`` up to its first Delta-gap.

    Returns ``(g, local_total, first, last)``: the gap end ``g`` (inf if no
    gap is found), the fresh tree score at ``g`` and the index range of the
    arrivals involved. After ``g`` the fresh tree and the global tree grow by
    identical amounts because every later block sees all earlier ones.
    """
    n = times.shape[0]
    first = np.searchsorted(times, a, side="right")
    if first >= n:
        return NEVER, 0.0, first, first
    local = np.zeros(n - first, dtype=np.float64)
    p = first
    best = 0.0
    top = 0.0
    j = first
    while j < n:
        t = times[j]
        while p < j and times[p] + delta <= t:
            if local[p - first] > best:
                best = local[p - first]
            p += 1
        local[j - first] = best + incs[j]
        if local[j - first] > top:
            top = local[j - first]
        if j + 1 >= n or times[j + 1] > t + delta:
            return t + delta, top, first, j + 1
        j += 1
    return NEVER, top, first, n


@njit
def fresh_direct(times, incs, delta, a, b):
    """Fresh fully-delayed tree score using only arrivals in ``(a, b]``."""
    if b <= a:
        return 0.0
    lo = np.searchsorted(times, a, side="right")
    hi = np.searchsorted(times, b, side="right")
    m = hi - lo
    if m <= 0:
        return 0.0
    local = np.zeros(m, dtype=np.float64)
    p = 0
    best = 0.0
    top = 0.0
    for j in range(m):
        t = times[lo + j]
        while p < j and times[lo + p] + delta <= t:
            if local[p] > best:
                best = local[p]
            p += 1
        local[j] = best + incs[lo + j]
        if local[j] > top:
            top = local[j]
    return top


@njit
def fresh_growth(times, incs, runmax, delta, a, b, g, local_total):
    """Fresh-tree growth on ``(a, b]`` given the sync point from ``fresh_sync``."""
    if b <= a:
        return 0.0
    if b >= g:
        return local_total + step_value(times, runmax, b) - step_value(times, runmax, g)
    return fresh_direct(times, incs, delta, a, b)


@njit
def count_in(times, lo, hi):
    """Number of entries in the closed interval [lo, hi]."""
    return np.searchsorted(times, hi, side="right") - np.searchsorted(times, lo, side="left")


@njit
def dominates(honest_growth, adversary_growth):
    # Strict dominance; an adversary with zero growth cannot overtake anything.
    return adversary_growth == 0.0 or honest_growth > adversary_growth


@njit
def interval_events(h_times, h_incs, h_runmax, a_times, a_cum, delta, tau_q, q, horizon):
    """Evaluate L_q, E1 and E2 for one query centre.

    ``a_cum[k]`` is the adversary score accumulated through arrival k.
    Returns ``(L, E1, E2, j)`` with ``j`` the honest index of the Nakamoto
    candidate (-1 when the window does not hold exactly one honest arrival).
    """
    lo = tau_q - q
    hi = tau_q + q
    j = -1
    n_in = count_in(h_times, lo, hi)
    if n_in == 1:
        j = np.searchsorted(h_times, lo, side="left")
    L = (
        n_in == 1
        and count_in(h_times, lo - delta, hi + delta) == 1
        and count_in(a_times, lo - 2.0 * delta, hi + 2.0 * delta) == 0
    )

    # E1: every earlier honest block (and genesis) is outgrown up to the window.
    past_h_end = lo - delta
    past_a_end = lo - 2.0 * delta
    a_end = step_value(a_times, a_cum, past_a_end)
    E1 = True
    n_prior = np.searchsorted(h_times, past_a_end, side="left")
    for i in range(-1, n_prior):
        tau_i = 0.0 if i < 0 else h_times[i]
        if tau_i >= past_a_end:
            continue
        s_a = a_end - step_value(a_times, a_cum, tau_i)
        if s_a == 0.0:
            continue
        start = tau_i + delta
        g, local_total, _, _ = fresh_sync(h_times, h_incs, delta, start)
        s_h = fresh_growth(h_times, h_incs, h_runmax, delta, start, past_h_end, g, local_total)
        if not dominates(s_h, s_a):
            E1 = False
            break

    # E2: from the window on, honest growth stays ahead at every adversary arrival.
    fut_h_start = hi + delta
    fut_a_start = hi + 2.0 * delta
    a_base = step_value(a_times, a_cum, fut_a_start)
    g, local_total, _, _ = fresh_sync(h_times, h_incs, delta, fut_h_start)
    E2 = True
    k0 = np.searchsorted(a_times, fut_a_start, side="right")
    for k in range(k0, a_times.shape[0]):
        t = a_times[k]
        if t > horizon:
            break
        s_a = a_cum[k] - a_base
        s_h = fresh_growth(h_times, h_incs, h_runmax, delta, fut_h_start, t - delta, g, local_total)
        if not dominates(s_h, s_a):
            E2 = False
            break
    return L, E1, E2, j


@njit
def interval_events_many(h_times, h_incs, h_runmax, a_times, a_cum, delta, centers, q, horizon):
    n = centers.shape[0]
    L = np.zeros(n, dtype=np.bool_)
    E1 = np.zeros(n, dtype=np.bool_)
    E2 = np.zeros(n, dtype=np.bool_)
    J = np.full(n, -1, dtype=np.int64)
    for c in range(n):
        l, e1, e2, j = interval_events(
            h_times, h_incs, h_runmax, a_times, a_cum, delta, centers[c], q, horizon
        )
        L[c] = l
        E1[c] = e1
        E2[c] = e2
        J[c] = j
    return L, E1, E2, J


@njit
def overtake_extent(h_times, h_incs, h_runmax, a_times, a_cum, delta, targets, horizon):
    """Shortest and longest time-length of adversary chains overtaking a target.

    A pair (prior honest block i or genesis, adversary arrival t) overtakes
    when the adversary score on (tau_i, t] is at least the fresh fully-delayed
    growth on (tau_i + delta, t - delta] and some target lies in (tau_i, t].
    Returns ``(min_len, max_len)``; both are -1 when nothing overtakes.
    """
    min_len = -1.0
    max_len = -1.0
    nt = targets.shape[0]
    if nt == 0:
        return min_len, max_len
    t_first = targets[0]
    t_last = targets[nt - 1]
    n_prior = np.searchsorted(h_times, t_last, side="left")
    k0 = np.searchsorted(a_times, t_first, side="left")
    for i in range(-1, n_prior):
        tau_i = 0.0 if i < 0 else h_times[i]
        # earliest target strictly after tau_i
        kt = np.searchsorted(targets, tau_i, side="right")
        if kt >= nt:
            continue
        need = targets[kt]
        base_a = step_value(a_times, a_cum, tau_i)
        start = tau_i + delta
        g, local_total, _, _ = fresh_sync(h_times, h_incs, delta, start)
        k = k0
        if a_times.shape[0] > 0:
            k = max(k0, np.searchsorted(a_times, need, side="left"))
        while k < a_times.shape[0]:
            t = a_times[k]
            if t > horizon:
                break
            s_a = a_cum[k] - base_a
            s_h = fresh_growth(h_times, h_incs, h_runmax, delta, start, t - delta, g, local_total)
            if s_a >= s_h:
                length = t - tau_i
                if min_len < 0.0 or length < min_len:
                    min_len = length
                if length > max_len:
                    max_len = length
            k += 1
    return min_len, max_len


@njit
def build_with_visibility(mine_time, is_honest, miner, incs, adv_parent, d_time, d_block, d_miner, n_miners):
    """Grow the mother tree when every visibility time is known up front.

    Deliveries ``(d_time, d_block, d_miner)`` must be sorted by time then
    block. Honest blocks attach to their miner's current fork-choice tip;
    adversary blocks attach to ``adv_parent`` (an id).
    """
    n = mine_time.shape[0]
    parent = np.zeros(n, dtype=np.int64)
    chain = np.zeros(n, dtype=np.float64)
    best_score = np.zeros(n_miners, dtype=np.float64)
    best_id = np.zeros(n_miners, dtype=np.int64)
    nd = d_time.shape[0]
    p = 0
    for j in range(n):
        t = mine_time[j]
        while p < nd and (d_time[p] < t or (d_time[p] == t and d_block[p] < j)):
            b = d_block[p]
            m = d_miner[p]
            s = chain[b]
            if s > best_score[m] or (s == best_score[m] and b + 1 < best_id[m]):
                best_score[m] = s
                best_id[m] = b + 1
            p += 1
        if is_honest[j]:
            par = best_id[miner[j]]
        else:
            par = adv_parent[j]
        parent[j] = par
        base = 0.0
        if par > 0:
            base = chain[par - 1]
        chain[j] = base + incs[j]
    return parent, chain


@njit
def tip_history(chain, d_time, d_block, d_miner, n_miners):
    """Replay sorted deliveries and log every fork-choice tip change.

    Returns parallel arrays (time, miner, tip id); the log starts with every
    miner on genesis at time 0.
    """
    nd = d_time.shape[0]
    h_time = np.empty(nd + n_miners, dtype=np.float64)
    h_miner = np.empty(nd + n_miners, dtype=np.int64)
    h_tip = np.empty(nd + n_miners, dtype=np.int64)
    best_score = np.zeros(n_miners, dtype=np.float64)
    best_id = np.zeros(n_miners, dtype=np.int64)
    w = 0
    for m in range(n_miners):
        h_time[w] = 0.0
        h_miner[w] = m
        h_tip[w] = 0
        w += 1
    for p in range(nd):
        b = d_block[p]
        m = d_miner[p]
        s = chain[b]
        if s > best_score[m] or (s == best_score[m] and b + 1 < best_id[m]):
            best_score[m] = s
            best_id[m] = b + 1
            h_time[w] = d_time[p]
            h_miner[w] = m
            h_tip[w] = b + 1
            w += 1
    return h_time[:w], h_miner[:w], h_tip[:w]


@njit
def descends_from(parent, target):
    """Boolean per block id (index 0 = genesis): does the block's chain contain ``target``?"""
    n = parent.shape[0]
    out = np.zeros(n + 1, dtype=np.bool_)
    if target == 0:
        out[:] = True
        return out
    for j in range(n):
        bid = j + 1
        out[bid] = bid == target or out[parent[j]]
    return out


@njit
def count_on_path(parent, flags, tip):
    """Number of flagged blocks on the path from ``tip`` back to genesis."""
    c = 0
    b = tip
    while b > 0:
        if flags[b - 1]:
            c += 1
        b = parent[b - 1]
    return c


@njit
def skips_tip(parent, chain, new, old):
    """True when the chain ending at ``new`` does not contain block ``old``."""
    floor = 0.0 if old == 0 else chain[old - 1]
    b = new
    while b != 0 and b != old and chain[b - 1] > floor:
        b = parent[b - 1]
    return b != old


@njit
def race(times, is_honest, miner, incs, n_miners, delta, strategy, restart_deficit):
    """Event-driven run of a built-in attack.

    strategy: 0 = none (adversary idle, no honest delay), 1 = full-delay
    (honest blocks held back delta; adversary mines on the best block it
    sees and leaks each block to one honest miner at once), 2 = private
    mining (honest blocks held back delta; adversary extends a private chain
    and reveals it as soon as it outscores every honest block).

    Returns ``(created, parent, chain, vis, reveal_times, dominated_at)``
    where ``created`` maps each created block to its arrival index and
    ``dominated_at`` is the first time an honest miner switched to an
    adversary block whose chain skips its previous tip (-1 if never).
    """
    n = times.shape[0]
    created = np.empty(n, dtype=np.int64)
    parent = np.zeros(n, dtype=np.int64)
    chain = np.zeros(n, dtype=np.float64)
    vis = np.full((n, n_miners), NEVER)
    honest_flag = np.zeros(n, dtype=np.bool_)
    best_score = np.zeros(n_miners, dtype=np.float64)
    best_id = np.zeros(n_miners, dtype=np.int64)
    fifo_t = np.empty(n, dtype=np.float64)
    fifo_b = np.empty(n, dtype=np.int64)
    head = 0
    tail = 0
    reveals = np.empty(n, dtype=np.float64)
    n_rev = 0
    nb = 0
    top_honest = 0.0
    top_honest_id = 0
    top_all = 0.0
    top_all_id = 0
    priv_tip = 0
    n_adv = 0
    dom = -1.0
    for e in range(n):
        t = times[e]
        if strategy == 0 and not is_honest[e]:
            continue
        while head < tail and (fifo_t[head] < t or (fifo_t[head] == t and fifo_b[head] < nb)):
            b = fifo_b[head]
            s = chain[b]
            for m in range(n_miners):
                if vis[b, m] == fifo_t[head] and (s > best_score[m] or (s == best_score[m] and b + 1 < best_id[m])):
                    if dom < 0.0 and not honest_flag[b] and skips_tip(parent, chain, b + 1, best_id[m]):
                        dom = fifo_t[head]
                    best_score[m] = s
                    best_id[m] = b + 1
            head += 1
        j = nb
        nb += 1
        created[j] = e
        if is_honest[e]:
            m0 = miner[e]
            par = best_id[m0]
            honest_flag[j] = True
        elif strategy == 1:
            par = top_all_id
        else:
            if restart_deficit < NEVER:
                cur = 0.0 if priv_tip == 0 else chain[priv_tip - 1]
                if top_honest - cur > restart_deficit:
                    priv_tip = top_honest_id
            par = priv_tip
        parent[j] = par
        chain[j] = (0.0 if par == 0 else chain[par - 1]) + incs[e]
        s = chain[j]
        if s > top_all:
            top_all = s
            top_all_id = j + 1
        if is_honest[e]:
            if s > top_honest:
                top_honest = s
                top_honest_id = j + 1
            if strategy == 0:
                for m in range(n_miners):
                    vis[j, m] = t
            else:
                for m in range(n_miners):
                    vis[j, m] = t + delta
                vis[j, m0] = t
                fifo_t[tail] = t + delta
                fifo_b[tail] = j
                tail += 1
            for m in range(n_miners):
                if vis[j, m] == t and (s > best_score[m] or (s == best_score[m] and j + 1 < best_id[m])):
                    best_score[m] = s
                    best_id[m] = j + 1
        elif strategy == 1:
            first = n_adv % n_miners
            n_adv += 1
            for m in range(n_miners):
                vis[j, m] = t + delta
            vis[j, first] = t
            fifo_t[tail] = t + delta
            fifo_b[tail] = j
            tail += 1
            if s > best_score[first] or (s == best_score[first] and j + 1 < best_id[first]):
                if dom < 0.0 and skips_tip(parent, chain, j + 1, best_id[first]):
                    dom = t
                best_score[first] = s
                best_id[first] = j + 1
        else:
            priv_tip = j + 1
        if strategy == 2 and priv_tip > 0 and vis[priv_tip - 1, 0] == NEVER:
            if chain[priv_tip - 1] > top_honest:
                b = priv_tip
                while b > 0 and vis[b - 1, 0] == NEVER:
                    for m in range(n_miners):
                        vis[b - 1, m] = t
                    b = parent[b - 1]
                # scores grow along a chain, so only the tip can become a best block
                s = chain[priv_tip - 1]
                for m in range(n_miners):
                    if s > best_score[m] or (s == best_score[m] and priv_tip < best_id[m]):
                        if dom < 0.0 and skips_tip(parent, chain, priv_tip, best_id[m]):
                            dom = t
                        best_score[m] = s
                        best_id[m] = priv_tip
                reveals[n_rev] = t
                n_rev += 1
    return created[:nb], parent[:nb], chain[:nb], vis[:nb], reveals[:n_rev], dom
