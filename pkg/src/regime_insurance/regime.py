"""Continuous-time Markov chain driving the market regime.

States are 0-based indices ``0..H-1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import InvalidModelError, NoStationaryDistributionError
from .expm import expm

_ROW_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class RegimeModel:
    """Generator plus per-regime drift and volatility.

    Parameters
    ----------
    generator : (H, H) array
        Rate matrix Q, 1/year. Off-diagonals >= 0, rows sum to zero.
    mu, sigma : (H,) arrays
        Per-regime drift and volatility of the risky asset.
    initial_dist : (H,) array, optional
        Law of the regime at time 0. Defaults to the stationary distribution.
    """

    generator: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    initial_dist: np.ndarray | None = field(default=None)

    def __post_init__(self):
        Q = np.array(self.generator, dtype=np.float64, ndmin=2)
        mu = np.array(self.mu, dtype=np.float64, ndmin=1)
        sigma = np.array(self.sigma, dtype=np.float64, ndmin=1)
        H = Q.shape[0]
        if Q.shape != (H, H):
            raise InvalidModelError(f"generator must be square, got {Q.shape}")
        if mu.shape != (H,) or sigma.shape != (H,):
            raise InvalidModelError(f"mu and sigma must have length {H}")
        for name, arr in (("generator", Q), ("mu", mu), ("sigma", sigma)):
            if not np.all(np.isfinite(arr)):
                raise InvalidModelError(f"{name} has non-finite entries")
        off = Q[~np.eye(H, dtype=bool)]
        if np.any(off < 0):
            raise InvalidModelError("generator has negative off-diagonal entries")
        rows = np.abs(Q.sum(axis=1))
        if np.any(rows > _ROW_TOL):
            bad = int(np.argmax(rows > _ROW_TOL))
            raise InvalidModelError(f"generator row {bad} does not sum to zero")
        if np.any(sigma <= 0):
            raise InvalidModelError("every sigma must be positive")

        for name, arr in (("generator", Q), ("mu", mu), ("sigma", sigma)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

        if self.initial_dist is None:
            p0 = stationary_distribution(self)
        else:
            p0 = np.array(self.initial_dist, dtype=np.float64, ndmin=1)
            if p0.shape != (H,) or np.any(p0 < 0) or abs(p0.sum() - 1) > _ROW_TOL:
                raise InvalidModelError("initial_dist must be a probability vector")
        p0.setflags(write=False)
        object.__setattr__(self, "initial_dist", p0)

    @property
    def num_states(self) -> int:
        return self.generator.shape[0]

    def key(self) -> tuple:
        """Hashable identity of the model parameters."""
        return tuple(
            a.tobytes() for a in (self.generator, self.mu, self.sigma, self.initial_dist)
        )


@dataclass(frozen=True)
class RegimePath:
    """Regime index at each grid node ``t_n = n * dt``.

    ``states`` has shape ``(..., N + 1)``; leading axes index paths.
    """

    states: np.ndarray
    dt: float

    @property
    def n_steps(self) -> int:
        return self.states.shape[-1] - 1


def transition_matrix(model: RegimeModel, dt: float) -> np.ndarray:
    """Transition probabilities over ``dt``: ``expm(Q * dt)``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    P = expm(model.generator * dt)
    if not np.all(np.isfinite(P)):
        raise InvalidModelError("transition matrix is not finite")
    P[(P < 0) & (P > -1e-12)] = 0.0
    return P


def stationary_distribution(model: RegimeModel) -> np.ndarray:
    """Unique ``pi`` with ``pi @ Q = 0`` and ``sum(pi) = 1``.

    Raises
    ------
    NoStationaryDistributionError
        If the chain is reducible.
    """
    Q = model.generator
    H = Q.shape[0]
    n_comp, _ = connected_components(Q != 0, directed=True, connection="strong")
    if n_comp != 1:
        raise NoStationaryDistributionError(
            f"generator has {n_comp} communicating classes; need exactly one"
        )
    A = Q.T.copy()
    A[-1, :] = 1.0
    rhs = np.zeros(H)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise NoStationaryDistributionError("singular stationary system") from exc
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    if np.max(np.abs(pi @ Q)) > 1e-10:
        raise NoStationaryDistributionError("stationary residual too large")
    return pi


def sample_initial_state(model: RegimeModel, u) -> np.ndarray:
    """Map uniforms to initial regimes drawn from ``model.initial_dist``."""
    cum = np.cumsum(model.initial_dist)
    idx = np.searchsorted(cum, np.asarray(u), side="right")
    return np.minimum(idx, model.num_states - 1)


def sample_regime_path(
    model: RegimeModel,
    n_steps: int,
    dt: float,
    uniforms,
    initial_state,
) -> RegimePath:
    """Sample a regime path on a fixed grid from supplied uniforms.

    The next state is the first index whose cumulative transition
    probability from the current state strictly exceeds the uniform; the
    last state absorbs any rounding shortfall in the cumulative row.

    ``uniforms`` may carry leading path axes, shape ``(..., n_steps)``,
    with ``initial_state`` broadcastable to ``(...)``.
    """
    u = np.asarray(uniforms, dtype=np.float64)
    if u.shape[-1] != n_steps:
        raise ValueError(f"need {n_steps} uniforms per path, got {u.shape[-1]}")
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("uniforms must lie strictly inside (0, 1)")
    H = model.num_states
    state0 = np.broadcast_to(np.asarray(initial_state, dtype=np.int64), u.shape[:-1])
    if np.any((state0 < 0) | (state0 >= H)):
        raise ValueError("initial_state out of range")

    cum = np.cumsum(transition_matrix(model, dt), axis=1)
    states = np.empty(u.shape[:-1] + (n_steps + 1,), dtype=np.int64)
    states[..., 0] = state0
    current = state0.copy()
    for k in range(n_steps):
        thresholds = cum[current]
        nxt = (u[..., k, None] >= thresholds).sum(axis=-1)
        current = np.minimum(nxt, H - 1)
        states[..., k + 1] = current
    return RegimePath(states=states, dt=float(dt))
