"""Result rows and their CSV / JSON encodings."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

from .errors import NakasimError

HEADER = ("param_point", "metric", "estimate", "ci_low", "ci_high", "n", "seed")


@dataclass(frozen=True)
class ResultRow:
    """One estimate. ``param_point`` starts with ``cfg=<hash>`` so files identify their config."""

    param_point: str
    metric: str
    estimate: float
    ci_low: float
    ci_high: float
    n: int
    seed: int

    def __post_init__(self):
        for name in ("estimate", "ci_low", "ci_high"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{self.metric}: {name} must be finite, got {v}")
            object.__setattr__(self, name, float(v))
        if not self.ci_low <= self.estimate <= self.ci_high:
            raise ValueError(f"{self.metric}: need ci_low <= estimate <= ci_high, got "
                             f"{self.ci_low}, {self.estimate}, {self.ci_high}")


def _fmt(v) -> str:
    return format(v, ".9g") if isinstance(v, float) else str(v)


def format_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        w.writerow([_fmt(getattr(r, k)) for k in HEADER])
    return buf.getvalue()


def format_json(rows: Sequence[ResultRow]) -> str:
    # repr-precision floats so parsing the file gives back identical rows
    return json.dumps([asdict(r) for r in rows], indent=1) + "\n"


def emit_results(rows: Sequence[ResultRow], fmt: str = "csv", path: str | Path | None = None) -> None:
    """Write rows to ``path`` (or stdout) in a fixed order and encoding."""
    if not rows:
        raise NakasimError("no result rows to emit")
    if fmt == "csv":
        text = format_csv(rows)
    elif fmt == "json":
        text = format_json(rows)
    else:
        raise NakasimError(f"unknown format {fmt!r}; expected csv or json")
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise NakasimError(f"cannot write {path}: {exc.strerror}") from None


def parse_json(text: str) -> list[ResultRow]:
    return [ResultRow(**obj) for obj in json.loads(text)]


def parse_csv(text: str) -> list[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader))
    if header != HEADER:
        raise NakasimError(f"unexpected CSV header {header}")
    out = []
    for rec in reader:
        vals = dict(zip(HEADER, rec))
        out.append(ResultRow(
            vals["param_point"], vals["metric"], float(vals["estimate"]), float(vals["ci_low"]),
            float(vals["ci_high"]), int(vals["n"]), int(vals["seed"]),
        ))
    return out
