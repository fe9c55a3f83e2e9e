import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regime_insurance import (
    CharFnModel,
    CppiSpec,
    DistributionTable,
    FloorSchedule,
    MarketConfig,
    RegimePath,
    VbpiSpec,
    build_distribution,
    cppi_exposure,
    evolve_cppi,
    evolve_vbpi,
    floor_value,
    match_multiple,
    sample_asset_path,
    vbpi_weight,
)
from regime_insurance.errors import ConfigError, InfeasibleFloorError, NoInitialCushionError
from regime_insurance.market import AssetPath, riskless_value
from regime_insurance.strategy import (
    evolve_weight_schedule,
    initial_weight_horizon,
    rebalance_grid,
    vbpi_schedule_times,
)

from conftest import single_regime

F0 = 100 * np.exp(-0.04)


def make_path(s, cfg, n_paths=None):
    """AssetPath with a prescribed risky price trajectory."""
    s = np.asarray(s, dtype=np.float64)
    regimes = RegimePath(states=np.zeros(s.shape, dtype=np.int64), dt=cfg.dt)
    return AssetPath(times=cfg.times, s=s, b=riskless_value(cfg, cfg.times), regimes=regimes)


def random_paths(cfg, model, n, seed=0):
    g = np.random.default_rng(seed)
    regimes = RegimePath(states=np.zeros((n, cfg.n_steps + 1), dtype=np.int64), dt=cfg.dt)
    return sample_asset_path(cfg, model, regimes, g.standard_normal((n, cfg.n_steps)))


class TestFloorAndExposure:
    def test_floor_value(self):
        f = FloorSchedule(pi=1.0, v0=100.0)
        assert abs(floor_value(f, 0.04, 1.0, 0.0) - 96.07894) < 5e-6
        assert floor_value(f, 0.04, 1.0, 1.0) == 100.0
        np.testing.assert_array_equal(floor_value(f, 0.0, 1.0, [0.0, 0.5]), 100.0)

    def test_exposure_examples(self):
        f = 96.07894
        assert cppi_exposure(CppiSpec(5.0), 100.0, f) == pytest.approx(19.6053, abs=1e-4)
        assert cppi_exposure(CppiSpec(5.0), 95.0, f) == 0.0
        assert cppi_exposure(CppiSpec(50.0), 100.0, f) == 100.0

    @settings(max_examples=100, deadline=None)
    @given(m=st.floats(0, 50), p=st.floats(0.1, 3), v=st.floats(1, 500), f=st.floats(0, 500))
    def test_exposure_bounds(self, m, p, v, f):
        e = float(cppi_exposure(CppiSpec(m, exposure_cap=p), v, f))
        assert 0.0 <= e <= p * v + 1e-12
        assert e <= m * max(v - f, 0) + 1e-9

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            FloorSchedule(pi=1.2)
        with pytest.raises(ValueError):
            CppiSpec(-1.0)
        with pytest.raises(ValueError):
            VbpiSpec(0.3)


class TestGrid:
    def test_daily_weekly_monthly(self):
        cfg = MarketConfig(steps_per_year=260)
        assert rebalance_grid(cfg, 260).size == 260
        np.testing.assert_array_equal(rebalance_grid(cfg, 52)[:3], [0, 5, 10])
        assert rebalance_grid(cfg, 12).size == 12

    def test_too_fine(self):
        with pytest.raises(ValueError):
            rebalance_grid(MarketConfig(steps_per_year=12), 52)


class TestCppi:
    def test_flat_market_zero_rate(self):
        cfg = MarketConfig(r=0.0, steps_per_year=12)
        port = evolve_cppi(CppiSpec(4.0, FloorSchedule(pi=0.9)), cfg, make_path(np.full(13, 100.0), cfg), np.arange(12))
        assert port.terminal == 100.0

    def test_unit_multiple_is_buy_and_hold(self):
        cfg = MarketConfig(steps_per_year=52)
        path = random_paths(cfg, single_regime(0.1, 0.3), 50)
        # pi close to 0 makes the floor negligible: m = 1, p = 1 holds the whole portfolio risky
        spec = CppiSpec(1.0, FloorSchedule(pi=1e-300))
        port = evolve_cppi(spec, cfg, path, np.arange(52))
        np.testing.assert_allclose(port.terminal / 100, path.s[:, -1] / 100, rtol=1e-13)

    def test_lock_in_is_sticky(self):
        cfg = MarketConfig(steps_per_year=12)
        s = np.array([100, 70, 140, 160, 170, 180, 190, 200, 210, 220, 230, 240, 250.0])
        port = evolve_cppi(CppiSpec(6.0), cfg, make_path(s, cfg), np.arange(12))
        k = int(np.argmax(port.locked))
        assert k == 1 and port.locked[k:].all()
        gross = np.exp(0.04 / 12)
        np.testing.assert_allclose(port.value[k + 1:] / port.value[k:-1], gross, rtol=1e-14)
        assert np.all(port.risky_weight[k:] == 0)

    def test_convexity(self):
        cfg = MarketConfig(r=0.0, steps_per_year=2)
        up = make_path([100, 110, 121], cfg)
        down = make_path([100, 100 / 1.1, 100 / 1.21], cfg)
        floor = FloorSchedule(pi=0.5)

        def avg(m):
            return 0.5 * sum(float(evolve_cppi(CppiSpec(m, floor), cfg, p, [0, 1]).terminal) for p in (up, down))

        assert avg(2.0) > avg(1.0)

    def test_breach_needs_large_single_step_loss(self):
        cfg = MarketConfig(steps_per_year=12)
        m = 8.0
        path = random_paths(cfg, single_regime(0.0, 0.45), 5000, seed=8)
        port = evolve_cppi(CppiSpec(m), cfg, path, np.arange(12))
        breach = port.terminal < 100.0 - 1e-9
        assert breach.any()
        # C' = C (g - m (g - 1 + loss)) with g the riskless gross step, so a breach needs
        # loss > g/m - (g - 1), which is 1/m when r = 0
        g = np.exp(cfg.r * cfg.dt)
        step_loss = 1 - path.s[:, 1:] / path.s[:, :-1]
        assert np.all(np.max(step_loss[breach], axis=1) > g / m - (g - 1))

    def test_value_stays_above_discrete_gap_bound(self):
        cfg = MarketConfig(steps_per_year=260)
        path = random_paths(cfg, single_regime(0.14, 0.16), 200, seed=4)
        port = evolve_cppi(CppiSpec(3.0), cfg, path, np.arange(260))
        # with m = 3 a daily drop of more than 1/3 would be needed to breach the floor
        f = floor_value(FloorSchedule(), 0.04, 1.0, cfg.times)
        assert np.all(port.value >= f - 1e-9)


@pytest.fixture(scope="module")
def gaussian_t1():
    return build_distribution(CharFnModel(single_regime(), 1.0))


class TestVbpiWeight:
    def test_gaussian_example(self, gaussian_t1):
        w = vbpi_weight(VbpiSpec(0.95), gaussian_t1, 100.0, 0.04, 1.0, 1.0)
        # frozen oracle: (100 - 100 e^q) / (100 e^0.04 - 100 e^q), q = -0.135984
        assert w == pytest.approx(0.7570, abs=5e-4)
        q = -0.135984
        ref = (100 - 100 * np.exp(q)) / (100 * np.exp(0.04) - 100 * np.exp(q))
        assert w == pytest.approx(ref, abs=1e-4)

    def test_clamped_to_zero_when_quantile_clears_floor(self):
        d = build_distribution(CharFnModel(single_regime(0.5, 0.05), 1.0))
        assert vbpi_weight(VbpiSpec(0.9), d, 100.0, 0.04, 1.0, 1.0) == 0.0

    def test_small_alpha_limit(self):
        d = build_distribution(CharFnModel(single_regime(0.0, 0.6), 1.0))
        w = vbpi_weight(VbpiSpec(1 - 1e-9), d, 100.0, 0.04, 1.0, 1.0)
        assert abs(w - np.exp(-0.04)) < 1e-3

    def test_infeasible_floor(self, gaussian_t1):
        with pytest.raises(InfeasibleFloorError):
            vbpi_weight(VbpiSpec(0.95), gaussian_t1, 90.0, 0.04, 1.0, 1.0)

    @settings(max_examples=30, deadline=None)
    @given(cl=st.floats(0.51, 0.999))
    def test_weight_in_unit_interval(self, two_regime, cl):
        d = build_distribution(CharFnModel(two_regime, 1.0))
        assert 0.0 <= vbpi_weight(VbpiSpec(cl), d, 100.0, 0.04, 1.0, 1.0) <= 1.0

    @pytest.mark.parametrize("t", [0.5, 1.0])
    def test_risky_fraction_falls_with_confidence(self, two_regime, t):
        d = build_distribution(CharFnModel(two_regime, t))
        ws = [vbpi_weight(VbpiSpec(cl), d, 100.0, 0.04, t, 1.0) for cl in np.linspace(0.6, 0.995, 20)]
        assert np.all(np.diff(ws) >= 0)


class TestVbpiEvolution:
    def test_forced_riskless(self):
        cfg = MarketConfig(steps_per_year=52)
        path = random_paths(cfg, single_regime(), 20)
        port = evolve_weight_schedule(1.0, cfg, path, np.arange(52), 100.0)
        np.testing.assert_allclose(port.terminal, 100 * np.exp(0.04), rtol=1e-14)

    def test_forced_risky(self):
        cfg = MarketConfig(steps_per_year=52)
        path = random_paths(cfg, single_regime(), 20)
        port = evolve_weight_schedule(0.0, cfg, path, np.arange(52), 100.0)
        np.testing.assert_allclose(port.terminal, path.s[:, -1], rtol=1e-13)

    def test_inception_schedule_matches_explicit_weights(self, two_regime):
        cfg = MarketConfig(steps_per_year=12)
        grid = rebalance_grid(cfg, 12)
        spec = VbpiSpec(1 - 1e-12, FloorSchedule(pi=1.0))
        dists = DistributionTable.build(two_regime, vbpi_schedule_times(spec, cfg, grid))
        weights = [vbpi_weight(spec, dists[t], 100, 0.04, t, 1.0) for t in vbpi_schedule_times(spec, cfg, grid)]
        path = random_paths(cfg, two_regime, 10)
        a = evolve_vbpi(spec, cfg, two_regime, path, grid, dists)
        b = evolve_weight_schedule(weights, cfg, path, grid, 100.0)
        np.testing.assert_array_equal(a.value, b.value)

    def test_missing_distribution(self, two_regime):
        cfg = MarketConfig(steps_per_year=12)
        grid = rebalance_grid(cfg, 12)
        dists = DistributionTable.build(two_regime, [1.0])
        path = random_paths(cfg, two_regime, 2)
        with pytest.raises(ConfigError):
            evolve_vbpi(VbpiSpec(0.95), cfg, two_regime, path, grid, dists)

    def test_w0_horizon(self):
        cfg = MarketConfig(steps_per_year=52)
        grid = rebalance_grid(cfg, 52)
        assert initial_weight_horizon(VbpiSpec(0.9), cfg, grid) == 1.0
        assert initial_weight_horizon(VbpiSpec(0.9, w0_horizon="first"), cfg, grid) == pytest.approx(1 / 52)

    def test_rolling_mode_runs(self, two_regime):
        cfg = MarketConfig(steps_per_year=12)
        grid = rebalance_grid(cfg, 12)
        spec = VbpiSpec(0.95, base="rolling")
        dists = DistributionTable.build(two_regime, 1.0 - cfg.times[grid])
        port = evolve_vbpi(spec, cfg, two_regime, random_paths(cfg, two_regime, 100), grid, dists)
        assert np.all((port.risky_weight >= 0) & (port.risky_weight <= 1 + 1e-12))


class TestMatching:
    def test_examples(self):
        assert match_multiple(0.7570, 100.0, 3.92106) == pytest.approx(6.197, abs=1e-3)
        assert match_multiple(1.0, 100.0, 3.92106) == 0.0
        assert match_multiple(0.0, 100.0, 50.0) == 2.0

    def test_no_cushion(self):
        with pytest.raises(NoInitialCushionError):
            match_multiple(0.5, 100.0, 0.0)

    def test_same_initial_allocation(self):
        w0, c0 = 0.82, 100 - F0
        m = match_multiple(w0, 100.0, c0)
        assert float(cppi_exposure(CppiSpec(m), 100.0, F0)) == pytest.approx((1 - w0) * 100, rel=1e-12)
