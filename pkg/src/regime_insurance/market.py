"""Riskless and regime-switching risky asset dynamics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .regime import RegimeModel, RegimePath


@dataclass(frozen=True)
class MarketConfig:
    """Market parameters and the simulation grid.

    Parameters
    ----------
    r : float
        Continuously compounded risk-free rate (1/year).
    s0, b0 : float
        Initial risky and riskless prices.
    horizon : float
        Investment horizon T in years.
    steps_per_year : int
        Grid frequency; 260 daily, 52 weekly, 12 monthly.
    """

    r: float = 0.04
    s0: float = 100.0
    b0: float = 1.0
    horizon: float = 1.0
    steps_per_year: int = 260

    def __post_init__(self):
        if not (self.s0 > 0 and self.b0 > 0 and self.horizon > 0):
            raise ValueError("s0, b0 and horizon must be positive")
        if self.steps_per_year < 1:
            raise ValueError("steps_per_year must be at least 1")
        n = self.horizon * self.steps_per_year
        if abs(n - round(n)) > 1e-9:
            raise ValueError(
                f"horizon {self.horizon} is not a whole number of "
                f"1/{self.steps_per_year}-year steps"
            )

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon * self.steps_per_year))

    @property
    def dt(self) -> float:
        return 1.0 / self.steps_per_year

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class AssetPath:
    """Simulated prices on the grid; ``s`` may carry leading path axes."""

    times: np.ndarray
    s: np.ndarray
    b: np.ndarray
    regimes: RegimePath


def riskless_value(cfg: MarketConfig, t) -> np.ndarray | float:
    """``b0 * exp(r t)``."""
    return cfg.b0 * np.exp(cfg.r * np.asarray(t, dtype=np.float64))


def sample_asset_path(
    cfg: MarketConfig,
    model: RegimeModel,
    regime_path: RegimePath,
    normals,
) -> AssetPath:
    """Exact log-normal step for each grid interval, regime frozen at its left node."""
    z = np.asarray(normals, dtype=np.float64)
    states = regime_path.states
    n = cfg.n_steps
    if z.shape[-1] != n or states.shape[-1] != n + 1:
        raise ValueError("normals / regime path do not match the market grid")

    dt = cfg.dt
    left = states[..., :-1]
    mu = model.mu[left]
    sig = model.sigma[left]
    incr = (mu - 0.5 * sig * sig) * dt + sig * np.sqrt(dt) * z

    log_s = np.empty(incr.shape[:-1] + (n + 1,))
    log_s[..., 0] = np.log(cfg.s0)
    np.cumsum(incr, axis=-1, out=log_s[..., 1:])
    log_s[..., 1:] += np.log(cfg.s0)

    times = cfg.times
    return AssetPath(
        times=times,
        s=np.exp(log_s),
        b=riskless_value(cfg, times),
        regimes=regime_path,
    )
