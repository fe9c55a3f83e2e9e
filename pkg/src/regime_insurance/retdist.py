"""Law of the log-return ``R_t = ln(S_t / S_0)`` under regime switching.

The characteristic function is a weighted matrix exponential; the density is
recovered on a uniform grid with one FFT and the cdf by cumulative
trapezoid. Quantiles of that cdf drive the VaR-based weights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    ConfigError,
    GridTooNarrowError,
    InsufficientResolutionError,
    NumericFailureError,
)
from .expm import expm
from .regime import RegimeModel

DEFAULT_N_FFT = 2**13
DEFAULT_WIDTH_SIGMAS = 12.0
_ENVELOPE_CUTOFF = 50.0
_EDGE_FRACTION = 0.01
_EDGE_MASS = 1e-4


@dataclass(frozen=True)
class CharFnModel:
    model: RegimeModel
    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"horizon t must be positive, got {self.t}")


@dataclass(frozen=True)
class ReturnDistribution:
    """Density and cdf of the log-return on a uniform grid."""

    s_grid: np.ndarray
    pdf: np.ndarray
    cdf: np.ndarray
    t: float
    mass: float  # trapezoidal integral of the pdf before renormalisation

    @property
    def ds(self) -> float:
        return float(self.s_grid[1] - self.s_grid[0])

    def cdf_at(self, x) -> np.ndarray:
        return np.interp(x, self.s_grid, self.cdf, left=0.0, right=1.0)


def b_gamma(model: RegimeModel, gamma) -> np.ndarray:
    """``Q' + diag(gamma (mu - sigma^2/2) + gamma^2 sigma^2 / 2)``.

    ``gamma`` may be an array; the result then has shape ``gamma.shape + (H, H)``.
    """
    g = np.asarray(gamma)[..., None]
    drift = model.mu - 0.5 * model.sigma**2
    diag = g * drift + 0.5 * g * g * model.sigma**2
    H = model.num_states
    out = np.zeros(diag.shape[:-1] + (H, H), dtype=np.result_type(diag, np.float64))
    out[...] = model.generator.T
    idx = np.arange(H)
    out[..., idx, idx] += diag
    return out


def char_fn(cf: CharFnModel, theta) -> np.ndarray | complex:
    """``E[exp(i theta R_t)] = 1' expm(B_{i theta} t) p(0)``; vectorised over ``theta``."""
    theta = np.asarray(theta, dtype=np.float64)
    B = b_gamma(cf.model, 1j * theta) * cf.t
    with np.errstate(over="ignore", invalid="ignore"):
        E = expm(B)
        phi = (E @ cf.model.initial_dist).sum(axis=-1)
    if not np.all(np.isfinite(phi)) or np.any(np.abs(phi) > 1 + 1e-9):
        raise NumericFailureError("characteristic function evaluation overflowed")
    return phi[()] if phi.ndim == 0 else phi


def mean_log_drift(model: RegimeModel) -> float:
    return float(model.initial_dist @ (model.mu - 0.5 * model.sigma**2))


def build_distribution(
    cf: CharFnModel,
    n_fft: int = DEFAULT_N_FFT,
    width_sigmas: float = DEFAULT_WIDTH_SIGMAS,
) -> ReturnDistribution:
    """Invert the characteristic function on an ``n_fft``-point grid.

    The grid is centred at the mean log drift times ``t`` and spans
    ``+-width_sigmas * max(sigma) * sqrt(t)``. The frequency step follows
    from ``dtheta * ds = 2 pi / n_fft``.

    Raises
    ------
    GridTooNarrowError
        If the recovered density does not integrate to 1 within 1e-3, or
        more than 1e-4 of it sits in the outer 1% of either end of the grid
        (the FFT wraps truncated tails back onto the grid, so the mass test
        alone cannot see a grid that is too narrow).
    """
    if n_fft < 2**10 or n_fft & (n_fft - 1):
        raise ValueError("n_fft must be a power of two >= 1024")
    if not width_sigmas > 0:
        raise ValueError("width_sigmas must be positive")
    model, t = cf.model, cf.t
    centre = mean_log_drift(model) * t
    half = width_sigmas * float(model.sigma.max()) * np.sqrt(t)
    ds = 2.0 * half / n_fft
    s0 = centre - half
    s_grid = s0 + ds * np.arange(n_fft)

    dtheta = 2.0 * np.pi / (n_fft * ds)
    theta = dtheta * np.arange(n_fft)
    weights = np.ones(n_fft)
    weights[0] = weights[-1] = 0.5
    # |phi(theta)| <= exp(-theta^2 min(sigma)^2 t / 2); drop frequencies below e^-50
    live = 0.5 * theta**2 * float(model.sigma.min()) ** 2 * t <= _ENVELOPE_CUTOFF
    phi = np.zeros(n_fft, dtype=np.complex128)
    phi[live] = char_fn(cf, theta[live])
    x = weights * phi * np.exp(-1j * theta * s0)
    pdf = np.fft.fft(x).real * (dtheta / np.pi)
    np.clip(pdf, 0.0, None, out=pdf)

    increments = 0.5 * (pdf[1:] + pdf[:-1]) * ds
    cdf = np.concatenate(([0.0], np.cumsum(increments)))
    mass = float(cdf[-1])
    if not 0.999 <= mass <= 1.001:
        raise GridTooNarrowError(
            f"density mass {mass:.6f} on the grid at t={t}; "
            "increase width_sigmas or n_fft"
        )
    cdf /= mass
    cdf[-1] = 1.0
    k = max(1, int(_EDGE_FRACTION * n_fft))
    if cdf[k] > _EDGE_MASS or 1.0 - cdf[-1 - k] > _EDGE_MASS:
        raise GridTooNarrowError(
            f"density at t={t} is not contained in the grid; increase width_sigmas"
        )
    for arr in (s_grid, pdf, cdf):
        arr.setflags(write=False)
    return ReturnDistribution(s_grid=s_grid, pdf=pdf, cdf=cdf, t=float(t), mass=mass)


def quantile(dist: ReturnDistribution, alpha: float) -> float:
    """``alpha``-quantile by linear interpolation of the cdf between bracketing nodes."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    cdf = dist.cdf
    if alpha <= cdf[0] or alpha > cdf[-1]:
        raise InsufficientResolutionError(f"alpha={alpha} outside the resolved cdf range")
    k = int(np.searchsorted(cdf, alpha, side="left"))
    lo, hi = cdf[k - 1], cdf[k]
    s = dist.s_grid
    return float(s[k - 1] + (alpha - lo) / (hi - lo) * (s[k] - s[k - 1]))


def _time_key(t: float) -> float:
    return round(float(t), 12)


class DistributionTable:
    """Return distributions indexed by horizon, one per rebalancing date."""

    def __init__(self, dists: Iterable[ReturnDistribution] = ()):
        self._dists = {_time_key(d.t): d for d in dists}

    @classmethod
    def build(
        cls,
        model: RegimeModel,
        times: Iterable[float],
        n_fft: int = DEFAULT_N_FFT,
        width_sigmas: float = DEFAULT_WIDTH_SIGMAS,
    ) -> "DistributionTable":
        return cls(
            _cached_distribution(model, float(t), n_fft, width_sigmas)
            for t in times
            if t > 0
        )

    def __getitem__(self, t: float) -> ReturnDistribution:
        try:
            return self._dists[_time_key(t)]
        except KeyError:
            raise ConfigError(f"no return distribution for t={t}") from None

    def __contains__(self, t: float) -> bool:
        return _time_key(t) in self._dists

    def __len__(self) -> int:
        return len(self._dists)

    def __iter__(self):
        return iter(sorted(self._dists.values(), key=lambda d: d.t))


_CACHE: dict[tuple, ReturnDistribution] = {}


def _cached_distribution(model, t, n_fft, width_sigmas) -> ReturnDistribution:
    key = (model.key(), _time_key(t), n_fft, float(width_sigmas))
    dist = _CACHE.get(key)
    if dist is None:
        dist = build_distribution(CharFnModel(model, t), n_fft, width_sigmas)
        _CACHE[key] = dist
    return dist


def write_distribution_csv(dist: ReturnDistribution, path: str | Path) -> None:
    """One row per grid node: ``s, pdf, cdf``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "pdf", "cdf"])
        for row in zip(dist.s_grid, dist.pdf, dist.cdf):
            w.writerow([repr(float(v)) for v in row])
