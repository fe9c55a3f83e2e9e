import numpy as np
import pytest

from regime_insurance import MarketConfig, RegimeModel

SWITCH_Q = [[-0.25, 0.25], [0.25, -0.25]]
BULL_BEAR_MU = [0.14, -0.01]
BULL_BEAR_SIGMA = [0.16, 0.20]


@pytest.fixture(scope="session")
def two_regime():
    return RegimeModel(generator=SWITCH_Q, mu=BULL_BEAR_MU, sigma=BULL_BEAR_SIGMA)


@pytest.fixture(scope="session")
def gaussian_model():
    """Both regimes identical, so R_t is exactly normal."""
    return RegimeModel(generator=SWITCH_Q, mu=[0.14, 0.14], sigma=[0.16, 0.16])


@pytest.fixture(scope="session")
def daily_market():
    return MarketConfig(r=0.04, s0=100.0, horizon=1.0, steps_per_year=260)


def single_regime(mu=0.14, sigma=0.16):
    return RegimeModel(generator=[[0.0]], mu=[mu], sigma=[sigma])


def rng(seed=0):
    return np.random.default_rng(seed)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
