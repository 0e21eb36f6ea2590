"""Port-selection self-interference cancellation with fluid antenna systems."""

from .analysis import (
    ApproxConfig,
    Estimate,
    alpha_beta,
    approx_cdf,
    approx_mean_rsi,
    cdf_lower_R,
    conditional_min_cdf,
    rsi_lower_bound,
)
from .channels import FiniteScatterParams, TapProfile, WidebandRealization
from .geometry import EigenBasis, FasGrid, eigen_basis, grid_basis, jakes_correlation, truncation_order
from .sic import PilotConfig, SimParams

__version__ = "0.1.0"

__all__ = [
    "ApproxConfig", "EigenBasis", "Estimate", "FasGrid", "FiniteScatterParams", "PilotConfig",
    "SimParams", "TapProfile", "WidebandRealization", "alpha_beta", "approx_cdf", "approx_mean_rsi",
    "cdf_lower_R", "conditional_min_cdf", "eigen_basis", "grid_basis", "jakes_correlation",
    "rsi_lower_bound", "truncation_order",
]
