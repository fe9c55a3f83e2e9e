"""Monte Carlo orchestration.

Every path ``j`` draws its regime uniforms and Brownian normals from two
Philox streams keyed by the master seed, with ``j`` and the stream id held
in the high counter words. Paths are processed in fixed blocks whose
boundaries do not depend on the worker count, and results land in
preallocated slots, so output is bit-identical for any number of workers.
"""

from __future__ import annotations

import logging
import time
from functools import lru_cache
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence, Union

import numpy as np

from .market import AssetPath, MarketConfig, sample_asset_path
from .metrics import MetricsReport, TerminalSample, compute_report
from .regime import RegimeModel, sample_initial_state, sample_regime_path
from .retdist import DistributionTable
from .strategy import (
    CppiSpec,
    FloorSchedule,
    VbpiSpec,
    evolve_cppi,
    evolve_vbpi,
    floor_value,
    initial_weight_horizon,
    match_multiple,
    rebalance_grid,
    required_horizons,
    vbpi_weight,
)

logger = logging.getLogger(__name__)

StrategySpec = Union[CppiSpec, VbpiSpec]
REBALANCE_CHOICES = ("daily", "weekly", "monthly")
_UNIFORM_STREAM, _NORMAL_STREAM = 0, 1


def rebalances_per_year(rebalance: str, daily: int = 260) -> int:
    try:
        return {"daily": daily, "weekly": 52, "monthly": 12}[rebalance]
    except KeyError:
        raise ValueError(f"unknown rebalance frequency {rebalance!r}") from None


@dataclass(frozen=True)
class SimulationPlan:
    """One Monte Carlo run: a market, a model and strategies on common paths.

    ``market.steps_per_year`` is the daily frequency. With
    ``monitoring="rebalance"`` the asset is simulated on the rebalancing grid
    itself; ``"daily"`` keeps the daily grid and rebalances a subset of it.
    ``zero_noise`` replaces every Brownian draw by 0 (test hook).
    """

    market: MarketConfig
    model: RegimeModel
    strategies: dict[str, StrategySpec]
    n_paths: int = 10_000
    master_seed: int = 42
    rebalance: str = "daily"
    monitoring: Literal["rebalance", "daily"] = "rebalance"
    workers: int = 1
    block_size: int = 2048
    n_bins: int = 50
    thresholds: Sequence[float] = (0.01, 0.02, 0.03, 0.04)
    kappa_orders: Sequence[int] = (2, 3)
    zero_noise: bool = False

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.block_size < 1 or self.workers < 1:
            raise ValueError("block_size and workers must be >= 1")
        if self.monitoring not in ("rebalance", "daily"):
            raise ValueError(f"unknown monitoring grid {self.monitoring!r}")
        rebalances_per_year(self.rebalance, self.market.steps_per_year)
        if not self.strategies:
            raise ValueError("plan has no strategies")

    @property
    def grid_market(self) -> MarketConfig:
        """Market config whose grid the asset is simulated on."""
        if self.monitoring == "daily":
            return self.market
        per_year = rebalances_per_year(self.rebalance, self.market.steps_per_year)
        return replace(self.market, steps_per_year=per_year)

    @property
    def rebalance_nodes(self) -> np.ndarray:
        per_year = rebalances_per_year(self.rebalance, self.market.steps_per_year)
        return rebalance_grid(self.grid_market, per_year)


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


@dataclass
class StrategyResult:
    spec: StrategySpec
    sample: TerminalSample
    metrics: MetricsReport
    histogram: Histogram


@dataclass
class SimulationReport:
    results: dict[str, StrategyResult]
    metadata: dict = field(default_factory=dict)


def histogram(sample: TerminalSample, n_bins: int) -> Histogram:
    """Uniform bins over ``[min, max]``; a constant sample gets a single bin."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    v = sample.values
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return Histogram(edges=np.array([lo, hi]), counts=np.array([v.size]))
    counts, edges = np.histogram(v, bins=n_bins, range=(lo, hi))
    return Histogram(edges=edges, counts=counts)


@lru_cache(maxsize=64)
def _philox_key(master_seed: int) -> np.ndarray:
    return np.random.SeedSequence(master_seed).generate_state(2, np.uint64)


def path_generator(master_seed: int, path_index: int, stream: int) -> np.random.Generator:
    """Independent generator for one (path, stream) pair."""
    bitgen = np.random.Philox(
        key=_philox_key(master_seed), counter=[0, 0, path_index, stream]
    )
    return np.random.Generator(bitgen)


def generate_paths(plan: SimulationPlan, start: int, stop: int) -> AssetPath:
    """Asset paths ``start..stop-1`` of the plan, shape ``(stop - start, N + 1)``."""
    cfg = plan.grid_market
    n = cfg.n_steps
    count = stop - start
    uniforms = np.empty((count, n + 1))
    normals = np.zeros((count, n))
    for i, j in enumerate(range(start, stop)):
        gu = path_generator(plan.master_seed, j, _UNIFORM_STREAM)
        # k * 2^-53 + 2^-54 lies strictly inside (0, 1)
        uniforms[i] = gu.random(n + 1) + 2.0**-54
        if not plan.zero_noise:
            gz = path_generator(plan.master_seed, j, _NORMAL_STREAM)
            normals[i] = gz.standard_normal(n)
    init = sample_initial_state(plan.model, uniforms[:, 0])
    regimes = sample_regime_path(plan.model, n, cfg.dt, uniforms[:, 1:], init)
    return sample_asset_path(cfg, plan.model, regimes, normals)


def build_distributions(plan: SimulationPlan) -> DistributionTable | None:
    cfg = plan.grid_market
    grid = plan.rebalance_nodes
    horizons = set()
    for spec in plan.strategies.values():
        if isinstance(spec, VbpiSpec):
            horizons.update(np.round(required_horizons(spec, cfg, grid), 12).tolist())
    if not horizons:
        return None
    return DistributionTable.build(plan.model, sorted(horizons))


def _with_name(name: str, exc: Exception) -> Exception:
    new = type(exc)(f"strategy {name}: {exc}")
    new.__cause__ = exc
    return new


def run(plan: SimulationPlan) -> SimulationReport:
    """Simulate ``plan.n_paths`` paths and evaluate every strategy on them."""
    tic = time.perf_counter()
    cfg = plan.grid_market
    grid = plan.rebalance_nodes
    dists = build_distributions(plan)

    names = list(plan.strategies)
    terminal = {name: np.empty(plan.n_paths) for name in names}
    blocks = [
        (start, min(start + plan.block_size, plan.n_paths))
        for start in range(0, plan.n_paths, plan.block_size)
    ]

    def work(block):
        start, stop = block
        path = generate_paths(plan, start, stop)
        for name in names:
            spec = plan.strategies[name]
            try:
                if isinstance(spec, CppiSpec):
                    port = evolve_cppi(spec, cfg, path, grid)
                else:
                    port = evolve_vbpi(spec, cfg, plan.model, path, grid, dists)
            except (ValueError, ArithmeticError) as exc:
                raise _with_name(name, exc)
            terminal[name][start:stop] = port.terminal

    if plan.workers == 1:
        for block in blocks:
            work(block)
    else:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            list(pool.map(work, blocks))

    results = {}
    for name in names:
        spec = plan.strategies[name]
        sample = TerminalSample(
            values=terminal[name],
            v0=spec.floor.v0,
            floor=spec.floor.terminal_floor,
            r=cfg.r,
            T=cfg.horizon,
        )
        results[name] = StrategyResult(
            spec=spec,
            sample=sample,
            metrics=compute_report(sample, plan.thresholds, plan.kappa_orders),
            histogram=histogram(sample, plan.n_bins),
        )

    elapsed = time.perf_counter() - tic
    meta = {
        "n_paths": plan.n_paths,
        "master_seed": plan.master_seed,
        "rebalance": plan.rebalance,
        "n_steps": cfg.n_steps,
        "n_rebalance": int(grid.size),
        "workers": plan.workers,
        "seconds": elapsed,
        "paths_per_sec": plan.n_paths / elapsed if elapsed > 0 else float("inf"),
    }
    logger.info(
        "%s: %d paths x %d steps in %.2fs", plan.rebalance, plan.n_paths, cfg.n_steps, elapsed
    )
    return SimulationReport(results=results, metadata=meta)


@dataclass(frozen=True)
class MatchedPair:
    """A VBPI strategy and the CPPI strategy with the same initial risky allocation."""

    confidence_level: float
    w0: float
    multiple: float
    vbpi: VbpiSpec
    cppi: CppiSpec


def matched_pair(
    market: MarketConfig,
    model: RegimeModel,
    floor: FloorSchedule,
    confidence_level: float,
    rebalance: str,
    monitoring: str = "rebalance",
    exposure_cap: float = 1.0,
    base: str = "inception",
    w0_horizon: str = "maturity",
) -> MatchedPair:
    """Build VBPI at ``confidence_level`` and the CPPI whose multiple matches its ``w0``."""
    vbpi = VbpiSpec(
        confidence_level=confidence_level, floor=floor, base=base, w0_horizon=w0_horizon
    )
    probe = SimulationPlan(
        market=market, model=model, strategies={"vbpi": vbpi},
        rebalance=rebalance, monitoring=monitoring,
    )
    cfg = probe.grid_market
    t1 = initial_weight_horizon(vbpi, cfg, probe.rebalance_nodes)
    dists = DistributionTable.build(model, [t1])
    w0 = vbpi_weight(vbpi, dists[t1], floor.v0, cfg.r, t1, cfg.horizon)
    c0 = floor.v0 - float(floor_value(floor, cfg.r, cfg.horizon, 0.0))
    m = match_multiple(w0, floor.v0, c0)
    cppi = CppiSpec(multiple=m, floor=floor, exposure_cap=exposure_cap)
    return MatchedPair(confidence_level, w0, m, vbpi, cppi)
