import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nakasim.arrivals import ArrivalTrace, BlockTypeSpec, Origin

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def honest_trace(times, horizon=None, types=None, miners=None):
    times = np.asarray(times, dtype=float)
    n = times.size
    return ArrivalTrace(
        times,
        np.zeros(n, dtype=int) if types is None else np.asarray(types),
        np.full(n, int(Origin.HONEST)),
        np.zeros(n, dtype=int) if miners is None else np.asarray(miners),
        float(horizon if horizon is not None else (times.max() + 10 if n else 10.0)),
    )


def adversary_trace(times, horizon, types=None):
    times = np.asarray(times, dtype=float)
    n = times.size
    return ArrivalTrace(
        times,
        np.zeros(n, dtype=int) if types is None else np.asarray(types),
        np.full(n, int(Origin.ADVERSARY)),
        np.full(n, -1),
        float(horizon),
    )


@pytest.fixture
def unit_spec():
    return [BlockTypeSpec(0, 1.0, 1.0, 0.0)]
