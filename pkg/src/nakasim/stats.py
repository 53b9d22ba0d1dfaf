"""Interval estimates and fits shared by the estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _st


def z_value(confidence: float) -> float:
    if not 0 < confidence < 1:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    return float(_st.norm.ppf(0.5 + confidence / 2))


@dataclass(frozen=True)
class Estimate:
    estimate: float
    ci_low: float
    ci_high: float
    n: int

    @property
    def halfwidth(self) -> float:
        return (self.ci_high - self.ci_low) / 2

    def excludes(self, value: float) -> bool:
        return not self.ci_low <= value <= self.ci_high


def wilson(successes: int, n: int, confidence: float = 0.95) -> Estimate:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return Estimate(math.nan, 0.0, 1.0, 0)
    z = z_value(confidence)
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # clamp so the point estimate always sits inside the interval
    return Estimate(p, max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half)), n)


def normal_interval(estimate: float, stderr: float, n: int, confidence: float = 0.95) -> Estimate:
    h = z_value(confidence) * stderr
    return Estimate(estimate, estimate - h, estimate + h, n)


def ratio_of_sums(num: np.ndarray, den: np.ndarray) -> tuple[float, float]:
    """sum(num)/sum(den) and its delta-method standard error for i.i.d. pairs."""
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    n = num.size
    r = float(num.sum() / den.sum())
    if n < 2:
        return r, math.nan
    resid = num - r * den
    se = math.sqrt(resid.var(ddof=1) / n) / den.mean()
    return r, float(se)


def proportion_stderr(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n) if n else math.nan


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r_squared: float


def line_fit(x: np.ndarray, y: np.ndarray) -> LineFit:
    """Ordinary least squares y = intercept + slope * x."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        return LineFit(math.nan, math.nan, math.nan)
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (intercept + slope * x)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LineFit(float(slope), float(intercept), min(1.0, max(0.0, r2)))
