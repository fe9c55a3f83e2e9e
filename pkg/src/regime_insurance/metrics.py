"""Performance and downside-risk measures on samples of terminal values.

Undefined ratios are returned as ``nan``; ratios with an empty loss side and
a positive gain side are ``inf``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TerminalSample:
    values: np.ndarray
    v0: float
    floor: float
    r: float
    T: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("values must be a non-empty 1-D sample")
        if not np.all(np.isfinite(v)):
            raise ValueError("terminal values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.size


@dataclass
class MetricsReport:
    mean: float
    std: float
    sharpe: float
    omega: dict[float, float] = field(default_factory=dict)
    kappa: dict[tuple[int, float], float] = field(default_factory=dict)
    shortfall_prob: float = 0.0
    expected_shortfall: float = float("nan")


def _ratio(num: float, den: float) -> float:
    if den > 0:
        return num / den
    if num > 0:
        return float("inf")
    return float("nan")


def omega(sample: TerminalSample, L: float) -> float:
    """``E(V - L)^+ / E(L - V)^+``."""
    v = sample.values
    gains = np.maximum(v - L, 0.0).mean()
    losses = np.maximum(L - v, 0.0).mean()
    return _ratio(float(gains), float(losses))


def kappa(sample: TerminalSample, n: int, L: float) -> float:
    """``(E V - L) / (E[((L - V)^+)^n])^(1/n)``; ``n = 2`` is the Sortino ratio."""
    if n < 1:
        raise ValueError("kappa order must be >= 1")
    v = sample.values
    lpm = float((np.maximum(L - v, 0.0) ** n).mean())
    return _ratio(float(v.mean() - L), lpm ** (1.0 / n))


def sharpe(sample: TerminalSample) -> float:
    """Excess simple return over ``exp(rT) - 1`` per unit of sample std (ddof=1)."""
    if sample.size < 2:
        return float("nan")
    ret = sample.values / sample.v0 - 1.0
    sd = float(ret.std(ddof=1))
    if sd == 0.0:
        return float("nan")
    excess = float(ret.mean()) - float(np.expm1(sample.r * sample.T))
    return excess / sd


def shortfall_stats(sample: TerminalSample) -> tuple[float, float]:
    """Fraction of values strictly below the floor and their mean shortfall."""
    v = sample.values
    below = v < sample.floor
    prob = float(below.mean())
    if not below.any():
        return prob, float("nan")
    return prob, float((sample.floor - v[below]).mean())


def threshold_levels(v0: float, thresholds) -> list[float]:
    """Omega/Kappa thresholds ``L = v0 (1 + x)``."""
    return [v0 * (1.0 + x) for x in thresholds]


def compute_report(
    sample: TerminalSample,
    thresholds=(0.01, 0.02, 0.03, 0.04),
    kappa_orders=(2, 3),
) -> MetricsReport:
    v = sample.values
    levels = threshold_levels(sample.v0, thresholds)
    prob, es = shortfall_stats(sample)
    return MetricsReport(
        mean=float(v.mean()),
        std=float(v.std(ddof=1)) if v.size > 1 else float("nan"),
        sharpe=sharpe(sample),
        omega={L: omega(sample, L) for L in levels},
        kappa={(n, L): kappa(sample, n, L) for n in kappa_orders for L in levels},
        shortfall_prob=prob,
        expected_shortfall=es,
    )
