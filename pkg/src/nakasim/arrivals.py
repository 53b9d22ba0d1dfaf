"""Typed Poisson arrival traces for honest miners and the adversary."""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .errors import InvalidParameterError

ADVERSARY_MINER = -1


class Origin(enum.IntEnum):
    HONEST = 0
    ADVERSARY = 1


@dataclass(frozen=True)
class BlockTypeSpec:
    type_id: int
    score: float
    honest_rate: float = 0.0
    adversary_rate: float = 0.0

    def __post_init__(self):
        if not (self.score > 0 and math.isfinite(self.score)):
            raise InvalidParameterError(f"block type {self.type_id}: score must be > 0, got {self.score}")
        if self.honest_rate < 0 or self.adversary_rate < 0:
            raise InvalidParameterError(f"block type {self.type_id}: rates must be >= 0")


def validate_specs(specs: Sequence[BlockTypeSpec]) -> None:
    if not specs:
        raise InvalidParameterError("at least one block type is required")
    ids = [s.type_id for s in specs]
    if len(set(ids)) != len(ids):
        raise InvalidParameterError(f"duplicate block type ids: {ids}")
    if all(s.honest_rate == 0 and s.adversary_rate == 0 for s in specs):
        raise InvalidParameterError("every block type has zero honest and adversary rate")


def score_table(specs: Sequence[BlockTypeSpec]) -> np.ndarray:
    """Dense array mapping type_id to score."""
    top = max(s.type_id for s in specs)
    table = np.full(top + 1, np.nan)
    for s in specs:
        table[s.type_id] = s.score
    return table


def honest_growth_bound(specs: Sequence[BlockTypeSpec]) -> float:
    """Score rate of the honest miners with no delay at all (sum c_i h_i)."""
    return float(sum(s.score * s.honest_rate for s in specs))


def adversary_rate(specs: Sequence[BlockTypeSpec]) -> float:
    """Adversary score growth rate lambda_a = sum c_i b_i."""
    return float(sum(s.score * s.adversary_rate for s in specs))


@dataclass(frozen=True)
class Arrival:
    time: float
    type_id: int
    origin: Origin
    miner_id: int


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ArrivalTrace:
    """Immutable time-sorted arrivals stored column-wise."""

    times: np.ndarray
    type_ids: np.ndarray
    origins: np.ndarray
    miner_ids: np.ndarray
    horizon: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "times", _readonly(np.asarray(self.times, dtype=np.float64)))
        object.__setattr__(self, "type_ids", _readonly(np.asarray(self.type_ids, dtype=np.int64)))
        object.__setattr__(self, "origins", _readonly(np.asarray(self.origins, dtype=np.int8)))
        object.__setattr__(self, "miner_ids", _readonly(np.asarray(self.miner_ids, dtype=np.int64)))
        n = self.times.shape[0]
        if not (self.type_ids.shape[0] == self.origins.shape[0] == self.miner_ids.shape[0] == n):
            raise InvalidParameterError("trace columns have different lengths")
        if not self.horizon > 0:
            raise InvalidParameterError(f"horizon must be > 0, got {self.horizon}")
        if n:
            if not np.all(np.isfinite(self.times)) or self.times[0] < 0:
                raise InvalidParameterError("arrival times must be finite and >= 0")
            if np.any(np.diff(self.times) <= 0):
                raise InvalidParameterError("arrival times must be strictly increasing")
            if self.times[-1] > self.horizon:
                raise InvalidParameterError("arrival after the horizon")

    def __len__(self) -> int:
        return self.times.shape[0]

    def __iter__(self) -> Iterator[Arrival]:
        for t, k, o, m in zip(self.times, self.type_ids, self.origins, self.miner_ids):
            yield Arrival(float(t), int(k), Origin(int(o)), int(m))

    @property
    def arrivals(self) -> list[Arrival]:
        return list(self)

    def __eq__(self, other):
        if not isinstance(other, ArrivalTrace):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and self.seed == other.seed
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.type_ids, other.type_ids)
            and np.array_equal(self.origins, other.origins)
            and np.array_equal(self.miner_ids, other.miner_ids)
        )

    def select(self, mask: np.ndarray) -> "ArrivalTrace":
        return ArrivalTrace(
            self.times[mask], self.type_ids[mask], self.origins[mask], self.miner_ids[mask], self.horizon, self.seed
        )

    @property
    def honest(self) -> "ArrivalTrace":
        return self.select(self.origins == Origin.HONEST)

    @property
    def adversary(self) -> "ArrivalTrace":
        return self.select(self.origins == Origin.ADVERSARY)

    def truncate(self, t: float) -> "ArrivalTrace":
        """Arrivals up to and including ``t``, with the horizon cut to ``t``."""
        keep = self.times <= t
        return ArrivalTrace(
            self.times[keep], self.type_ids[keep], self.origins[keep], self.miner_ids[keep], t, self.seed
        )

    def scores(self, specs: Sequence[BlockTypeSpec]) -> np.ndarray:
        table = score_table(specs)
        out = table[self.type_ids] if len(self) else np.zeros(0)
        if np.any(np.isnan(out)):
            raise InvalidParameterError("trace references a block type missing from specs")
        return out

    @classmethod
    def empty(cls, horizon: float, seed: int = 0) -> "ArrivalTrace":
        z = np.zeros(0)
        return cls(z, z, z, z, horizon, seed)


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """PCG64 stream for ``seed`` split along ``key``; distinct keys never share a stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(key))))


def derive_seed(root_seed: int, *key: int) -> int:
    """64-bit child seed; used to give every trial its own seed from the trial index."""
    ss = np.random.SeedSequence(int(root_seed), spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _poisson_times(rng: np.random.Generator, rate: float, horizon: float) -> np.ndarray:
    if rate == 0:
        return np.zeros(0)
    mean = rate * horizon
    chunk = int(mean + 6.0 * math.sqrt(mean) + 16)
    parts = []
    last = 0.0
    while True:
        t = last + np.cumsum(rng.exponential(1.0 / rate, size=chunk))
        parts.append(t)
        last = t[-1]
        if last > horizon:
            break
    out = np.concatenate(parts)
    return out[: np.searchsorted(out, horizon, side="right")]


def _strictly_increasing(times: np.ndarray) -> np.ndarray:
    # Floating-point coincidences only; nudge the later event up by one ulp.
    if times.size < 2:
        return times
    d = np.diff(times)
    if np.all(d > 0):
        return times
    times = times.copy()
    for k in range(1, times.size):
        if times[k] <= times[k - 1]:
            times[k] = np.nextafter(times[k - 1], np.inf)
    return times


def _assemble(times, type_ids, origins, miners, horizon, seed) -> ArrivalTrace:
    times = np.asarray(times, dtype=np.float64)
    order = np.lexsort((miners, type_ids, origins, times))
    times = _strictly_increasing(times[order])
    keep = times <= horizon
    return ArrivalTrace(
        times[keep], np.asarray(type_ids)[order][keep], np.asarray(origins)[order][keep],
        np.asarray(miners)[order][keep], horizon, seed,
    )


def generate_poisson_trace(rate: float, horizon: float, seed: int, type_id: int = 0,
                           origin: Origin = Origin.HONEST, miner_id: int = 0) -> ArrivalTrace:
    """Single Poisson stream with i.i.d. exponential gaps of mean ``1/rate``."""
    if not horizon > 0 or not math.isfinite(horizon):
        raise InvalidParameterError(f"horizon must be a positive finite number, got {horizon}")
    if not rate >= 0 or not math.isfinite(rate):
        raise InvalidParameterError(f"rate must be >= 0, got {rate}")
    times = _poisson_times(rng_for(seed), rate, horizon)
    n = times.size
    miner = ADVERSARY_MINER if origin == Origin.ADVERSARY else miner_id
    return _assemble(times, np.full(n, type_id), np.full(n, int(origin)), np.full(n, miner), horizon, seed)


def generate_typed_trace(specs: Sequence[BlockTypeSpec], origin: Origin, n_miners: int,
                         horizon: float, seed: int) -> ArrivalTrace:
    """Superpose one Poisson stream per (type, miner), or per type for the adversary.

    Honest type-i rate is split evenly across ``n_miners``. Each stream draws
    from its own split of ``seed`` so adding a miner never reshuffles others.
    """
    if not specs:
        raise InvalidParameterError("specs must be nonempty")
    if not horizon > 0 or not math.isfinite(horizon):
        raise InvalidParameterError(f"horizon must be a positive finite number, got {horizon}")
    origin = Origin(origin)
    if origin == Origin.HONEST and n_miners < 1:
        raise InvalidParameterError("n_miners must be >= 1 for honest traces")
    cols = ([], [], [], [])
    for spec in specs:
        if origin == Origin.HONEST:
            streams = [(m, spec.honest_rate / n_miners) for m in range(n_miners)]
        else:
            streams = [(ADVERSARY_MINER, spec.adversary_rate)]
        for miner, rate in streams:
            t = _poisson_times(rng_for(seed, int(origin), spec.type_id, miner + 1), rate, horizon)
            cols[0].append(t)
            cols[1].append(np.full(t.size, spec.type_id))
            cols[2].append(np.full(t.size, int(origin)))
            cols[3].append(np.full(t.size, miner))
    return _assemble(*(np.concatenate(c) for c in cols), horizon, seed)


def merge_traces(*traces: ArrivalTrace) -> ArrivalTrace:
    """Time-ordered union of traces (horizon is the smallest of the inputs)."""
    horizon = min(t.horizon for t in traces)
    return _assemble(
        np.concatenate([t.times for t in traces]),
        np.concatenate([t.type_ids for t in traces]),
        np.concatenate([t.origins for t in traces]),
        np.concatenate([t.miner_ids for t in traces]),
        horizon,
        traces[0].seed,
    )


@dataclass(frozen=True, eq=False)
class PuncturedTrace:
    base: ArrivalTrace
    segment_length: float
    delay: float
    kept: ArrivalTrace
    segment_scores: np.ndarray
    cumulative_scores: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "segment_scores", _readonly(np.asarray(self.segment_scores, dtype=np.float64)))
        object.__setattr__(self, "cumulative_scores", _readonly(np.cumsum(self.segment_scores)))

    @property
    def kept_arrivals(self) -> list[Arrival]:
        return self.kept.arrivals

    @property
    def period(self) -> float:
        return self.segment_length + self.delay


def puncture_trace(honest: ArrivalTrace, B: float, delta: float,
                   specs: Sequence[BlockTypeSpec]) -> PuncturedTrace:
    """Keep arrivals in [k(B+delta), k(B+delta)+B) and drop the delta-long gaps between.

    Segment k's score is the fully-delayed growth produced by its own kept
    arrivals; because each puncture is at least delta long, later segments see
    every earlier block, so these are differences of one fully-delayed run.
    Only segments that end inside the horizon are scored.
    """
    if not B > 0:
        raise InvalidParameterError(f"segment length B must be > 0, got {B}")
    if not delta >= 0:
        raise InvalidParameterError(f"delta must be >= 0, got {delta}")
    period = B + delta
    phase = honest.times - np.floor(honest.times / period) * period
    kept = honest.select(phase < B)
    n_seg = int(math.floor(honest.horizon / period))
    incs = kept.scores(specs)
    _, _, runmax = kernels.fd_chain(kept.times, incs, float(delta))
    ends = np.arange(1, n_seg + 1) * period
    idx = np.searchsorted(kept.times, ends, side="right") - 1
    at_end = np.where(idx >= 0, runmax[np.maximum(idx, 0)] if runmax.size else 0.0, 0.0)
    seg = np.diff(np.concatenate([[0.0], at_end]))
    return PuncturedTrace(honest, float(B), float(delta), kept, seg)


# -- text format ---------------------------------------------------------------

_ORIGIN_NAMES = {Origin.HONEST: "honest", Origin.ADVERSARY: "adversary"}
_ORIGIN_BY_NAME = {v: k for k, v in _ORIGIN_NAMES.items()}


def dump_trace(trace: ArrivalTrace, out) -> None:
    """Write ``time<TAB>type_id<TAB>origin<TAB>miner_id`` lines, preceded by ``#`` metadata."""
    out.write(f"# horizon={trace.horizon!r}\n# seed={trace.seed}\n")
    for t, k, o, m in zip(trace.times, trace.type_ids, trace.origins, trace.miner_ids):
        out.write(f"{t:.9f}\t{k}\t{_ORIGIN_NAMES[Origin(int(o))]}\t{m}\n")


def dumps_trace(trace: ArrivalTrace) -> str:
    buf = io.StringIO()
    dump_trace(trace, buf)
    return buf.getvalue()


def load_trace(source) -> ArrivalTrace:
    """Parse the text format from a path or an open text stream."""
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            return load_trace(fh)
    meta = {}
    cols = ([], [], [], [])
    for lineno, raw in enumerate(source, 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
            continue
        parts = line.split("\t")
        if len(parts) != 4 or parts[2] not in _ORIGIN_BY_NAME:
            raise InvalidParameterError(f"line {lineno}: expected time<TAB>type_id<TAB>origin<TAB>miner_id")
        try:
            cols[0].append(float(parts[0]))
            cols[1].append(int(parts[1]))
            cols[2].append(int(_ORIGIN_BY_NAME[parts[2]]))
            cols[3].append(int(parts[3]))
        except ValueError as exc:
            raise InvalidParameterError(f"line {lineno}: {exc}") from None
    times = np.asarray(cols[0], dtype=np.float64)
    horizon = float(meta["horizon"]) if "horizon" in meta else (float(times[-1]) if times.size else 1.0)
    seed = int(meta.get("seed", 0))
    return _assemble(times, np.asarray(cols[1], dtype=np.int64), np.asarray(cols[2], dtype=np.int8),
                     np.asarray(cols[3], dtype=np.int64), horizon, seed)
