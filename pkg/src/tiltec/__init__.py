"""Tilted (saddlepoint) Euler characteristic approximations for non-Gaussian random fields."""

from .bubbles import BubblesConfig, bubble_cumulant, bubbles_model, bubbles_pvalue, monte_carlo_study, simulate_field
from .bubbles import spectral_moment
from .chi2 import chi2_comparison_table, chi2_normalized_density
from .ec_density import HermiteArg, QuadratureConfig, Rho0Method, rho0, rho_gaussian, rho_tilted
from .geometry import Density, ECMethodSpec, Region, Spectral, expected_ec, intrinsic_volumes, threshold_for_pvalue
from .saddlepoint import Chi2Normalized, PureGaussian, TruncatedSeries, solve_saddlepoint
from .topology import LatticeField, ec_curve, euler_characteristic, excursion_mask

__all__ = [
    "BubblesConfig",
    "Chi2Normalized",
    "Density",
    "ECMethodSpec",
    "HermiteArg",
    "LatticeField",
    "PureGaussian",
    "QuadratureConfig",
    "Region",
    "Rho0Method",
    "Spectral",
    "TruncatedSeries",
    "bubble_cumulant",
    "bubbles_model",
    "bubbles_pvalue",
    "chi2_comparison_table",
    "chi2_normalized_density",
    "ec_curve",
    "euler_characteristic",
    "excursion_mask",
    "expected_ec",
    "intrinsic_volumes",
    "monte_carlo_study",
    "rho0",
    "rho_gaussian",
    "rho_tilted",
    "simulate_field",
    "solve_saddlepoint",
    "spectral_moment",
    "threshold_for_pvalue",
]
