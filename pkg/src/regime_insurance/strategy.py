"""Constrained CPPI and VaR-based portfolio insurance along simulated paths.

Both strategies are evolved with the exact self-financing recursion

    V[n+1] = E[n] * S[n+1]/S[n] + (V[n] - E[n]) * B[n+1]/B[n]

where ``E[n]`` is the risky exposure fixed at the last rebalancing node.
All functions accept asset paths with leading path axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .errors import InfeasibleFloorError, NoInitialCushionError
from .market import AssetPath, MarketConfig
from .regime import RegimeModel
from .retdist import DistributionTable, ReturnDistribution, quantile


@dataclass(frozen=True)
class FloorSchedule:
    """Guarantee of ``pi * v0`` at maturity."""

    pi: float = 1.0
    v0: float = 100.0

    def __post_init__(self):
        if not 0 < self.pi <= 1:
            raise ValueError(f"pi must lie in (0, 1], got {self.pi}")
        if not self.v0 > 0:
            raise ValueError("v0 must be positive")

    @property
    def terminal_floor(self) -> float:
        return self.pi * self.v0


@dataclass(frozen=True)
class CppiSpec:
    multiple: float
    floor: FloorSchedule = FloorSchedule()
    exposure_cap: float = 1.0

    def __post_init__(self):
        if self.multiple < 0 or not self.exposure_cap > 0:
            raise ValueError("multiple must be >= 0 and exposure_cap > 0")


@dataclass(frozen=True)
class VbpiSpec:
    confidence_level: float
    floor: FloorSchedule = FloorSchedule()
    base: Literal["inception", "rolling"] = "inception"
    w0_horizon: Literal["maturity", "first"] = "maturity"

    def __post_init__(self):
        if not 0.5 < self.confidence_level < 1:
            raise ValueError("confidence_level must lie in (0.5, 1)")
        if self.base not in ("inception", "rolling"):
            raise ValueError(f"unknown VBPI base {self.base!r}")
        if self.w0_horizon not in ("maturity", "first"):
            raise ValueError(f"unknown w0_horizon {self.w0_horizon!r}")

    @property
    def alpha(self) -> float:
        return 1.0 - self.confidence_level


@dataclass(frozen=True)
class PortfolioPath:
    """Portfolio value, risky weight and lock flag at every grid node."""

    times: np.ndarray
    value: np.ndarray
    risky_weight: np.ndarray
    locked: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.value[..., -1]


def floor_value(floor: FloorSchedule, r: float, T: float, t):
    """Discounted floor ``exp(-r (T - t)) * pi * v0``."""
    return np.exp(-r * (T - np.asarray(t, dtype=np.float64))) * floor.terminal_floor


def cppi_exposure(spec: CppiSpec, v, f):
    """``min(m * max(v - f, 0), p * v)``."""
    v = np.asarray(v, dtype=np.float64)
    cushion = np.maximum(v - f, 0.0)
    return np.minimum(spec.multiple * cushion, spec.exposure_cap * v)


def rebalance_grid(cfg: MarketConfig, per_year: int) -> np.ndarray:
    """Indices of rebalancing nodes on the market grid (maturity excluded).

    When ``per_year`` does not divide the market frequency, each date is
    snapped to the nearest market node.
    """
    n_rebal = int(round(cfg.horizon * per_year))
    if n_rebal < 1:
        raise ValueError("horizon shorter than one rebalancing period")
    if per_year > cfg.steps_per_year:
        raise ValueError("rebalancing cannot be finer than the market grid")
    idx = np.round(np.arange(n_rebal) * cfg.n_steps / n_rebal).astype(np.int64)
    return np.unique(idx)


def _check_grid(path: AssetPath, grid) -> np.ndarray:
    grid = np.unique(np.asarray(grid, dtype=np.int64))
    n = path.s.shape[-1] - 1
    if grid.size == 0 or grid[0] != 0 or grid[-1] >= n:
        raise ValueError("rebalance grid must start at node 0 and lie before maturity")
    return grid


def _evolve(
    path: AssetPath,
    grid,
    v0: float,
    allocate: Callable[[int, np.ndarray], tuple[np.ndarray, np.ndarray]],
) -> PortfolioPath:
    """Run the self-financing recursion; ``allocate(n, V)`` returns (exposure, locked)."""
    grid = _check_grid(path, grid)
    rebal = np.zeros(path.s.shape[-1], dtype=bool)
    rebal[grid] = True

    s, b = path.s, path.b
    shape = s.shape
    value = np.empty(shape)
    weight = np.empty(shape)
    locked = np.zeros(shape, dtype=bool)

    V = np.full(shape[:-1], float(v0))
    x = np.zeros(shape[:-1])  # currency held in the risky asset
    y = np.zeros(shape[:-1])  # currency held in the riskless asset
    lk = np.zeros(shape[:-1], dtype=bool)
    value[..., 0] = V
    n_last = shape[-1] - 1
    for n in range(n_last):
        if rebal[n]:
            x, lk = allocate(n, V)
            x = np.broadcast_to(x, V.shape).astype(np.float64)
            y = V - x
        value[..., n] = V
        weight[..., n] = x / V
        locked[..., n] = lk
        x = x * (s[..., n + 1] / s[..., n])
        y = y * (b[n + 1] / b[n])
        V = x + y
    value[..., n_last] = V
    weight[..., n_last] = x / V
    locked[..., n_last] = lk
    return PortfolioPath(times=path.times, value=value, risky_weight=weight, locked=locked)


def evolve_cppi(
    spec: CppiSpec,
    cfg: MarketConfig,
    path: AssetPath,
    rebalance_grid,
) -> PortfolioPath:
    """Constrained CPPI with sticky lock-in once the cushion is exhausted."""
    T, r = cfg.horizon, cfg.r
    lk = False

    def allocate(n, V):
        nonlocal lk
        f = floor_value(spec.floor, r, T, path.times[n])
        lk = lk | (V <= f)
        return np.where(lk, 0.0, cppi_exposure(spec, V, f)), lk

    return _evolve(path, rebalance_grid, spec.floor.v0, allocate)


def _riskless_fraction(f, base, growth, q):
    """Clamped solution of ``P(w base growth + (1-w) base e^R <= f) = alpha``.

    Returns (w, pinned) where ``pinned`` marks a clamped raw value.
    """
    eq = np.exp(q)
    safe = base * eq >= f
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = (f - base * eq) / (base * (growth - eq))
    raw = np.where(safe, 0.0, raw)
    w = np.clip(raw, 0.0, 1.0)
    pinned = safe | (raw >= 1.0)
    return w, pinned


def vbpi_weight(
    spec: VbpiSpec,
    dist: ReturnDistribution,
    v0: float,
    r: float,
    t: float,
    T: float,
) -> float:
    """Riskless fraction ``w`` that puts the floor at the ``1 - CL`` quantile.

    ``w = (F_t - v0 e^q) / (v0 (e^{rt} - e^q))`` with ``q`` the quantile of
    the log-return at horizon ``t``, clamped to ``[0, 1]``.

    Raises
    ------
    InfeasibleFloorError
        If even a fully riskless portfolio cannot reach ``F_t``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    f = float(floor_value(spec.floor, r, T, t))
    growth = np.exp(r * t)
    if f > v0 * growth * (1 + 1e-12):
        raise InfeasibleFloorError(
            f"floor {f:.6g} at t={t:g} exceeds riskless value {v0 * growth:.6g} "
            f"(pi={spec.floor.pi}, r={r})"
        )
    q = quantile(dist, spec.alpha)
    w, _ = _riskless_fraction(f, v0, growth, q)
    return float(w)


def first_rebalance_time(cfg: MarketConfig, grid) -> float:
    """Time of the first rebalancing date after inception (maturity if none)."""
    grid = np.unique(np.asarray(grid, dtype=np.int64))
    later = grid[grid > 0]
    return float(cfg.times[later[0]] if later.size else cfg.horizon)


def initial_weight_horizon(spec: VbpiSpec, cfg: MarketConfig, grid) -> float:
    """Horizon for the inception weight ``w0``, where the formula degenerates at t = 0."""
    if spec.w0_horizon == "first":
        return first_rebalance_time(cfg, grid)
    return float(cfg.horizon)


def vbpi_schedule_times(spec: VbpiSpec, cfg: MarketConfig, grid) -> np.ndarray:
    """Horizon at which each rebalancing node evaluates its weight."""
    grid = np.unique(np.asarray(grid, dtype=np.int64))
    t = cfg.times[grid].copy()
    t[t == 0] = initial_weight_horizon(spec, cfg, grid)
    return t


def required_horizons(spec: VbpiSpec, cfg: MarketConfig, grid) -> np.ndarray:
    """Horizons whose return distribution ``evolve_vbpi`` will look up."""
    if spec.base == "inception":
        return vbpi_schedule_times(spec, cfg, grid)
    grid = np.unique(np.asarray(grid, dtype=np.int64))
    return cfg.horizon - cfg.times[grid]


def evolve_weight_schedule(
    riskless_weights,
    cfg: MarketConfig,
    path: AssetPath,
    rebalance_grid,
    v0: float,
) -> PortfolioPath:
    """Self-financing portfolio that resets to the given riskless weights at each rebalancing node."""
    grid = np.unique(np.asarray(rebalance_grid, dtype=np.int64))
    w = np.broadcast_to(np.asarray(riskless_weights, dtype=np.float64), grid.shape)
    lookup = dict(zip(grid.tolist(), w.tolist()))

    def allocate(n, V):
        wn = lookup[n]
        return (1.0 - wn) * V, np.full(V.shape, wn in (0.0, 1.0))

    return _evolve(path, grid, v0, allocate)


def evolve_vbpi(
    spec: VbpiSpec,
    cfg: MarketConfig,
    model: RegimeModel,
    path: AssetPath,
    rebalance_grid,
    dists: DistributionTable,
) -> PortfolioPath:
    """VaR-based insurance re-weighted at every rebalancing node.

    In ``inception`` mode the weight at node ``t_n`` comes from the law of
    ``R_{t_n}`` seen from time 0 and the initial value ``v0``, so the
    schedule is the same on every path. ``rolling`` mode re-anchors at the
    current value over the remaining horizon. ``model`` must be the model
    ``dists`` was built from.
    """
    T, r, v0 = cfg.horizon, cfg.r, spec.floor.v0
    grid = np.unique(np.asarray(rebalance_grid, dtype=np.int64))

    if spec.base == "inception":
        horizons = vbpi_schedule_times(spec, cfg, grid)
        weights = {
            n: vbpi_weight(spec, dists[t], v0, r, t, T)
            for n, t in zip(grid.tolist(), horizons)
        }

        def allocate(n, V):
            return (1.0 - weights[n]) * V, np.full(V.shape, weights[n] in (0.0, 1.0))

    else:
        F_T = spec.floor.terminal_floor

        def allocate(n, V):
            tau = T - path.times[n]
            q = quantile(dists[tau], spec.alpha)
            growth = np.exp(r * tau)
            infeasible = V * growth < F_T
            w, p = _riskless_fraction(F_T, V, growth, q)
            w = np.where(infeasible, 1.0, w)
            return (1.0 - w) * V, p | infeasible

    return _evolve(path, grid, v0, allocate)


def match_multiple(w0: float, v0: float, c0: float) -> float:
    """CPPI multiple giving the same initial risky allocation: ``m c0 = (1 - w0) v0``."""
    if not c0 > 0:
        raise NoInitialCushionError(
            f"initial cushion {c0:.6g} is not positive; lower pi to match a multiple"
        )
    return (1.0 - w0) * v0 / c0
