"""CPPI and VaR-based portfolio insurance under a regime-switching GBM."""

from .market import AssetPath, MarketConfig, riskless_value, sample_asset_path
from .regime import (
    RegimeModel,
    RegimePath,
    sample_regime_path,
    stationary_distribution,
    transition_matrix,
)
from .retdist import (
    CharFnModel,
    DistributionTable,
    ReturnDistribution,
    b_gamma,
    build_distribution,
    char_fn,
    quantile,
)
from .strategy import (
    CppiSpec,
    FloorSchedule,
    PortfolioPath,
    VbpiSpec,
    cppi_exposure,
    evolve_cppi,
    evolve_vbpi,
    floor_value,
    match_multiple,
    vbpi_weight,
)

__version__ = "0.1.0"
