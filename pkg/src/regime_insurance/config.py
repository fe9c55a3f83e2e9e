"""Experiment configuration: YAML file -> validated ``ExperimentConfig``."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, InvalidModelError, NoStationaryDistributionError
from .harness import REBALANCE_CHOICES, rebalances_per_year
from .market import MarketConfig
from .regime import RegimeModel
from .strategy import FloorSchedule

_SECTIONS = {
    "market": {"r", "s0", "v0", "horizon", "steps_per_year"},
    "model": {"regimes", "generator", "initial_dist"},
    "strategy": {"pi", "p", "cl", "vbpi_base", "w0_horizon", "kappa_orders", "thresholds"},
    "sim": {"paths", "seed", "rebalance", "workers", "monitoring", "block_size"},
    "output": {"directory", "histogram_bins", "dump_distributions"},
}


@dataclass
class ExperimentConfig:
    market: MarketConfig
    model: RegimeModel
    floor: FloorSchedule
    exposure_cap: float = 1.0
    confidence_levels: list[float] = field(default_factory=lambda: [0.90, 0.95, 0.99])
    vbpi_base: str = "inception"
    w0_horizon: str = "maturity"
    kappa_orders: list[int] = field(default_factory=lambda: [2, 3])
    thresholds: list[float] = field(default_factory=lambda: [0.01, 0.02, 0.03, 0.04])
    paths: int = 10_000
    seed: int = 42
    rebalance: list[str] = field(default_factory=lambda: list(REBALANCE_CHOICES))
    workers: int = 1
    monitoring: str = "rebalance"
    block_size: int = 2048
    out_dir: Path = Path("out")
    histogram_bins: int = 50
    dump_distributions: bool = False


def _require(section: dict, name: str, where: str):
    if name not in section:
        raise ConfigError(f"{where}.{name}: required field is missing")
    return section[name]


def _number(value, where: str, *, positive=False, integer=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    if positive and not value > 0:
        raise ConfigError(f"{where}: must be positive, got {value!r}")
    return int(value) if integer else float(value)


def _nonempty_list(value, where: str) -> list:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a non-empty list")
    return value


def _parse_model(sec: dict) -> RegimeModel:
    regimes = _nonempty_list(_require(sec, "regimes", "model"), "model.regimes")
    mu, sigma = [], []
    for i, reg in enumerate(regimes):
        where = f"model.regimes[{i}]"
        if not isinstance(reg, dict):
            raise ConfigError(f"{where}: expected a mapping with mu and sigma")
        mu.append(_number(_require(reg, "mu", where), f"{where}.mu"))
        sigma.append(_number(_require(reg, "sigma", where), f"{where}.sigma", positive=True))
    H = len(regimes)

    rows = _nonempty_list(_require(sec, "generator", "model"), "model.generator")
    if len(rows) != H:
        raise ConfigError(f"model.generator: expected {H} rows to match model.regimes")
    Q = np.empty((H, H))
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != H:
            raise ConfigError(f"model.generator row {i}: expected {H} entries")
        Q[i] = [_number(x, f"model.generator[{i}]") for x in row]
        if any(Q[i, j] < 0 for j in range(H) if j != i):
            raise ConfigError(f"model.generator row {i}: negative off-diagonal rate")
        if abs(Q[i].sum()) > 1e-12:
            raise ConfigError(f"model.generator row {i}: entries sum to {Q[i].sum():g}, not 0")

    p0 = sec.get("initial_dist")
    if p0 is not None:
        p0 = [_number(x, "model.initial_dist") for x in _nonempty_list(p0, "model.initial_dist")]
    try:
        return RegimeModel(generator=Q, mu=mu, sigma=sigma, initial_dist=p0)
    except (InvalidModelError, NoStationaryDistributionError) as exc:
        raise ConfigError(f"model: {exc}") from exc


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a parsed YAML mapping and apply defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    for key in raw:
        if key not in _SECTIONS:
            warnings.warn(f"unknown config section {key!r} ignored", stacklevel=2)
    sections = {}
    for name, allowed in _SECTIONS.items():
        sec = raw.get(name) or {}
        if not isinstance(sec, dict):
            raise ConfigError(f"{name}: expected a mapping")
        for key in sec:
            if key not in allowed:
                warnings.warn(f"unknown key {name}.{key} ignored", stacklevel=2)
        sections[name] = sec
    if "model" not in raw:
        raise ConfigError("model: required section is missing")

    mk, st, sim, out = (sections[k] for k in ("market", "strategy", "sim", "output"))
    try:
        market = MarketConfig(
            r=_number(mk.get("r", 0.04), "market.r"),
            s0=_number(mk.get("s0", 100.0), "market.s0", positive=True),
            horizon=_number(mk.get("horizon", 1.0), "market.horizon", positive=True),
            steps_per_year=_number(
                mk.get("steps_per_year", 260), "market.steps_per_year", positive=True, integer=True
            ),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"market: {exc}") from exc
    v0 = _number(mk.get("v0", 100.0), "market.v0", positive=True)

    pi = _number(st.get("pi", 1.0), "strategy.pi", positive=True)
    if pi > 1:
        raise ConfigError(f"strategy.pi: must lie in (0, 1], got {pi}")
    cls = [_number(c, "strategy.cl") for c in _nonempty_list(st.get("cl", [0.90, 0.95, 0.99]), "strategy.cl")]
    for c in cls:
        if not 0.5 < c < 1:
            raise ConfigError(f"strategy.cl: confidence level {c} outside (0.5, 1)")
    base = st.get("vbpi_base", "inception")
    if base not in ("inception", "rolling"):
        raise ConfigError(f"strategy.vbpi_base: expected inception or rolling, got {base!r}")
    w0h = st.get("w0_horizon", "maturity")
    if w0h not in ("maturity", "first"):
        raise ConfigError(f"strategy.w0_horizon: expected maturity or first, got {w0h!r}")
    orders = [
        _number(n, "strategy.kappa_orders", positive=True, integer=True)
        for n in _nonempty_list(st.get("kappa_orders", [2, 3]), "strategy.kappa_orders")
    ]
    thresholds = [
        _number(x, "strategy.thresholds")
        for x in _nonempty_list(st.get("thresholds", [0.01, 0.02, 0.03, 0.04]), "strategy.thresholds")
    ]

    rebal = _nonempty_list(sim.get("rebalance", list(REBALANCE_CHOICES)), "sim.rebalance")
    for name in rebal:
        if name not in REBALANCE_CHOICES:
            raise ConfigError(f"sim.rebalance: unknown frequency {name!r}")
    monitoring = sim.get("monitoring", "rebalance")
    if monitoring not in ("rebalance", "daily"):
        raise ConfigError(f"sim.monitoring: expected rebalance or daily, got {monitoring!r}")
    if monitoring == "rebalance":
        for name in rebal:
            n = market.horizon * rebalances_per_year(name, market.steps_per_year)
            if abs(n - round(n)) > 1e-9:
                raise ConfigError(
                    f"market.horizon: {market.horizon} years is not a whole number of "
                    f"{name} periods; use sim.monitoring: daily"
                )
    seed = _number(sim.get("seed", 42), "sim.seed", integer=True)
    if not 0 <= seed < 2**64:
        raise ConfigError("sim.seed: must be a non-negative 64-bit integer")

    return ExperimentConfig(
        market=market,
        model=_parse_model(sections["model"]),
        floor=FloorSchedule(pi=pi, v0=v0),
        exposure_cap=_number(st.get("p", 1.0), "strategy.p", positive=True),
        confidence_levels=cls,
        vbpi_base=base,
        w0_horizon=w0h,
        kappa_orders=orders,
        thresholds=thresholds,
        paths=_number(sim.get("paths", 10_000), "sim.paths", positive=True, integer=True),
        seed=seed,
        rebalance=list(rebal),
        workers=_number(sim.get("workers", 1), "sim.workers", positive=True, integer=True),
        monitoring=monitoring,
        block_size=_number(sim.get("block_size", 2048), "sim.block_size", positive=True, integer=True),
        out_dir=Path(out.get("directory", "out")),
        histogram_bins=_number(out.get("histogram_bins", 50), "output.histogram_bins", positive=True, integer=True),
        dump_distributions=bool(out.get("dump_distributions", False)),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a YAML experiment config."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: parse error{where}: {getattr(exc, 'problem', exc)}") from exc
    return parse_config(raw)
