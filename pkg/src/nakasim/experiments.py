"""Dispatch an ``ExperimentConfig`` to its estimator and flatten the output into rows."""

from __future__ import annotations

import logging
import math

import numpy as np

from . import analysis
from .arrivals import Origin, adversary_rate, derive_seed, generate_typed_trace, honest_growth_bound
from .blocktree import build_fully_delayed_chain
from .config import ExperimentConfig
from .errors import NakasimError
from .parallel import map_trials
from .results import ResultRow
from .stats import Estimate, normal_interval, ratio_of_sums, wilson

log = logging.getLogger("nakasim")


class ExperimentError(NakasimError):
    pass


def _point(cfg: ExperimentConfig, **kv) -> str:
    parts = [f"cfg={cfg.config_hash}"]
    for k, v in kv.items():
        parts.append(f"{k}={format(v, '.9g') if isinstance(v, float) else v}")
    return ";".join(parts)


def _row(cfg, point, metric, est: Estimate | float, n: int | None = None) -> ResultRow:
    if isinstance(est, Estimate):
        return ResultRow(point, metric, est.estimate, est.ci_low, est.ci_high, est.n if n is None else n,
                         cfg.root_seed)
    v = float(est)
    return ResultRow(point, metric, v, v, v, cfg.n_trials if n is None else n, cfg.root_seed)


def _lambda_h(cfg, threads):
    specs, delta = cfg.block_types, cfg.delta

    def trial(i):
        tr = generate_typed_trace(specs, Origin.HONEST, 1, cfg.horizon, derive_seed(cfg.root_seed, i))
        ch = build_fully_delayed_chain(tr, delta, specs)
        return ch.renewal_scores[1:], ch.renewal_times[1:]

    parts = map_trials(trial, cfg.n_trials, threads)
    s = np.concatenate([p[0] for p in parts])
    t = np.concatenate([p[1] for p in parts])
    if s.size < 1:
        raise ExperimentError("lambda-h: no complete renewal segment; increase the horizon")
    lam, se = ratio_of_sums(s, t)
    est = normal_interval(lam, 0.0 if math.isnan(se) else se, int(s.size), cfg.confidence)
    pt = _point(cfg, honest_rate=honest_growth_bound(specs), delta=delta)
    return [_row(cfg, pt, "lambda_h", est)]


def _nakamoto(cfg, threads):
    p = cfg.params
    r = analysis.estimate_nakamoto_probability(
        cfg.block_types, cfg.delta, p["q"], cfg.n_trials, cfg.horizon, cfg.root_seed, tau_q=p.get("tau_q"),
        n_miners=cfg.n_miners, confidence=cfg.confidence, threads=threads,
    )
    pt = _point(cfg, q=r.q, tau_q=r.tau_q, lambda_a=adversary_rate(cfg.block_types))
    gap = Estimate(r.gap, r.gap - r.gap_tolerance, r.gap + r.gap_tolerance, cfg.n_trials)
    return [
        _row(cfg, pt, "p_joint", r.p_joint), _row(cfg, pt, "p_L", r.p_L), _row(cfg, pt, "p_E1", r.p_E1),
        _row(cfg, pt, "p_E2", r.p_E2), _row(cfg, pt, "p_product", r.product), _row(cfg, pt, "independence_gap", gap),
    ]


def _persistence(cfg, threads):
    p = cfg.params
    reports = analysis.run_persistence_trials(
        cfg.block_types, cfg.delta, p["q"], cfg.n_trials, cfg.horizon, cfg.root_seed,
        strategies=p.get("strategies", ["private-mining", "full-delay"]), tau_q=p.get("tau_q"),
        n_miners=cfg.n_miners, restart_deficit=p.get("restart_deficit"), threads=threads,
    )
    rows = []
    for rep in reports:
        pt = _point(cfg, strategy=rep.strategy, q=p["q"])
        rows.append(_row(cfg, pt, "nakamoto_flagged", float(rep.n_flagged)))
        rows.append(_row(cfg, pt, "persistence_violations", float(rep.n_violations)))
        rows.append(_row(cfg, pt, "schedule_violations", float(rep.n_schedule_violations)))
    return rows


def _private_attack(cfg, threads):
    r = analysis.run_private_attack(
        cfg.block_types, cfg.delta, cfg.horizon, cfg.n_trials, cfg.root_seed, n_miners=cfg.n_miners,
        restart_deficit=cfg.params.get("restart_deficit"), confidence=cfg.confidence, threads=threads,
        lambda_h=cfg.params.get("lambda_h"),
    )
    pt = _point(cfg, ratio=r.ratio, lambda_a=r.lambda_a)
    return [_row(cfg, pt, "attack_success", r.success), _row(cfg, pt, "zero_survivors", r.zero_survivors)]


def _counterexample(cfg, threads):
    (spec,) = cfg.block_types
    p = cfg.params
    st = analysis.run_counterexample(spec.honest_rate, spec.adversary_rate, cfg.delta, p["n_steps"], cfg.root_seed,
                                     method=p.get("method", "renewal"), confidence=cfg.confidence)
    pt = _point(cfg, h=spec.honest_rate, b=spec.adversary_rate, delta=cfg.delta)
    return [
        _row(cfg, pt, "p_cond", Estimate(st.p_cond, *st.p_cond_ci, st.n_after_honest)),
        _row(cfg, pt, "p_marg", Estimate(st.p_marg, *st.p_marg_ci, st.n_steps)),
    ]


def _decay_rows(cfg, fit: analysis.DecayFit, xs, label: str, prob_metric: str):
    rows = []
    for x, pr in zip(xs, fit.probabilities):
        k = int(round(pr * fit.n_trials))
        rows.append(_row(cfg, _point(cfg, **{label: float(x)}), prob_metric, wilson(k, fit.n_trials, cfg.confidence)))
    pt = _point(cfg, fit=f"log-linear[{len(fit.tprimes)}]")
    lo, hi = fit.slope_ci
    lo, hi = min(lo, fit.slope), max(hi, fit.slope)
    rows.append(_row(cfg, pt, "slope", Estimate(fit.slope, lo, hi, fit.n_trials)))
    rows.append(_row(cfg, pt, "intercept", fit.intercept))
    rows.append(_row(cfg, pt, "r_squared", fit.r_squared))
    return rows


def _decay_no_nakamoto(cfg, threads):
    p = cfg.params
    fit = analysis.estimate_no_nakamoto_decay(
        cfg.block_types, cfg.delta, p["q"], p["lengths"], cfg.n_trials, cfg.root_seed, start=p.get("start"),
        horizon=cfg.horizon, n_miners=cfg.n_miners, confidence=cfg.confidence, n_bootstrap=p.get("n_bootstrap", 400), threads=threads,
        lambda_h=p.get("lambda_h"),
    )
    return _decay_rows(cfg, fit, p["lengths"], "t", "p_no_nakamoto")


def _decay_overtake(cfg, threads):
    p = cfg.params
    fit = analysis.estimate_overtake_decay(
        cfg.block_types, cfg.delta, p["window"], p["tprimes"], cfg.n_trials, cfg.root_seed, start=p.get("start"),
        horizon=cfg.horizon, n_miners=cfg.n_miners, confidence=cfg.confidence, n_bootstrap=p.get("n_bootstrap", 400), threads=threads,
        lambda_h=p.get("lambda_h"),
    )
    return _decay_rows(cfg, fit, p["tprimes"], "tprime", "p_overtake")


def _phase(cfg, threads):
    p = cfg.params
    pts = analysis.run_phase_diagram(
        cfg.block_types, cfg.delta, p["ratios"], cfg.n_trials, cfg.root_seed, horizon=cfg.horizon,
        n_miners=cfg.n_miners, strategy=p.get("strategy", "private-mining"),
        restart_deficit=p.get("restart_deficit"), lambda_h=p.get("lambda_h"), confidence=cfg.confidence,
        threads=threads,
    )
    rows = []
    for a in pts:
        pt = _point(cfg, ratio=a.ratio)
        rows.append(_row(cfg, pt, "attack_success", a.success))
        rows.append(_row(cfg, pt, "zero_survivors", a.zero_survivors))
    return rows


def _stay_above(cfg, threads):
    p = cfg.params
    r = analysis.estimate_stay_above_probability(
        cfg.block_types, cfg.delta, p.get("B"), p.get("epsilon"), cfg.n_trials, cfg.horizon, cfg.root_seed,
        side=p.get("side", "honest"), lambda_h=p.get("lambda_h"), n_miners=cfg.n_miners,
        confidence=cfg.confidence, threads=threads,
    )
    pt = _point(cfg, side=r.side, B=r.B, epsilon=r.epsilon)
    return [_row(cfg, pt, "stay_above", r.probability)]


_DISPATCH = {
    "lambda-h": _lambda_h, "nakamoto-prob": _nakamoto, "persistence": _persistence,
    "private-attack": _private_attack, "counterexample": _counterexample,
    "decay-no-nakamoto": _decay_no_nakamoto, "decay-overtake": _decay_overtake,
    "phase-diagram": _phase, "stay-above": _stay_above,
}


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Rows for ``cfg``; identical for any ``threads`` because trials reduce in index order."""
    log.info("running %s (config %s, %d trials, %d threads)", cfg.experiment, cfg.config_hash, cfg.n_trials, threads)
    try:
        return _DISPATCH[cfg.experiment](cfg, max(1, int(threads)))
    except ExperimentError:
        raise
    except (NakasimError, ValueError) as exc:
        raise ExperimentError(f"{cfg.experiment}: {exc}") from exc
