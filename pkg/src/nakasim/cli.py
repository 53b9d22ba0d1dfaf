"""Command line entry point: ``nakasim run | validate | replay | capture``."""

from __future__ import annotations

import argparse
import logging
import sys
import time

from . import __version__
from ._jit import backend
from .adversary import STRATEGY_CODES, run_fast
from .arrivals import BlockTypeSpec, Origin, derive_seed, dump_trace, generate_typed_trace, load_trace, merge_traces
from .config import ConfigError, load_config
from .errors import NakasimError
from .experiments import run_experiment
from .results import emit_results

log = logging.getLogger("nakasim")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nakasim", description="Nakamoto consensus security simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-q", "--quiet", action="store_true", help="only print errors on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--out", default=None, help="output path (default: stdout)")
    run.add_argument("--threads", type=int, default=1)

    val = sub.add_parser("validate", help="parse and validate a config file")
    val.add_argument("--config", required=True)

    rep = sub.add_parser("replay", help="rebuild the block tree from a captured arrival trace")
    rep.add_argument("--trace", required=True)
    rep.add_argument("--config", default=None, help="take block types, delta and n_miners from this config")
    rep.add_argument("--delta", type=float, default=None)
    rep.add_argument("--strategy", choices=sorted(STRATEGY_CODES), default="private-mining")
    rep.add_argument("--n-miners", type=int, default=None)
    rep.add_argument("--out", default=None)

    cap = sub.add_parser("capture", help="write the arrival trace of one trial of a config")
    cap.add_argument("--config", required=True)
    cap.add_argument("--trial", type=int, default=0)
    cap.add_argument("--out", default=None)
    return p


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w")


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.threads < 1:
        raise NakasimError("--threads must be >= 1")
    start = time.perf_counter()
    rows = run_experiment(cfg, threads=args.threads)
    emit_results(rows, args.format, args.out)
    # timing goes to stderr only, so result files stay byte-identical across runs
    log.info("config %s: %d rows in %.2f s (%s kernels)", cfg.config_hash, len(rows),
             time.perf_counter() - start, backend())
    return 0


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"ok {cfg.experiment} config={cfg.config_hash} types={len(cfg.block_types)} "
          f"delta={cfg.delta:g} horizon={cfg.horizon:g} n_trials={cfg.n_trials} n_miners={cfg.n_miners}")
    return 0


def _cmd_replay(args) -> int:
    trace = load_trace(args.trace)
    if args.config:
        cfg = load_config(args.config)
        specs, delta, n_miners = list(cfg.block_types), cfg.delta, cfg.n_miners
    else:
        types = sorted({int(k) for k in trace.type_ids}) or [0]
        specs = [BlockTypeSpec(k, 1.0) for k in types]
        delta = 0.0
        n_miners = int(trace.honest.miner_ids.max()) + 1 if len(trace.honest) else 1
    if args.delta is not None:
        delta = args.delta
    if args.n_miners is not None:
        n_miners = args.n_miners
    tree, outcome = run_fast(args.strategy, trace.honest, trace.adversary, delta, trace.horizon, specs, n_miners)
    out = _open_out(args.out)
    try:
        out.write(tree.dumps())
    finally:
        if out is not sys.stdout:
            out.close()
    log.info("replayed %d arrivals: %d blocks, dominated_at=%s, %d reveals, %d honest blocks on the final chain",
             len(trace), len(tree), outcome.dominated_at, len(outcome.reveal_times),
             outcome.final_honest_blocks_in_chain)
    return 0


def _cmd_capture(args) -> int:
    cfg = load_config(args.config)
    s = derive_seed(cfg.root_seed, args.trial)
    honest = generate_typed_trace(cfg.block_types, Origin.HONEST, cfg.n_miners, cfg.horizon, s)
    adversary = generate_typed_trace(cfg.block_types, Origin.ADVERSARY, cfg.n_miners, cfg.horizon, s)
    merged = merge_traces(honest, adversary)
    out = _open_out(args.out)
    try:
        dump_trace(merged, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


_COMMANDS = {"run": _cmd_run, "validate": _cmd_validate, "replay": _cmd_replay, "capture": _cmd_capture}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, stream=sys.stderr,
                        format="%(name)s: %(message)s", force=True)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NakasimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
