"""Optimal hedging of European options under CEV dynamics with quadratic
execution costs.

The value function of the hedging problem is quadratic in holdings,
V = a(t,S) H^2 + b(t,S) H + c(t,S); the coefficient fields solve a
parabolic system that this package integrates with a certified
fixed-point iteration, then validates by Monte-Carlo policy rollouts.
"""

from .process import ModelParams, TimeGrid, SamplePath, simulate_paths
from .process import transition_density, spot_power_moment, sample_transition_exact
from .ncx2 import NoncentralChiSq, ncx2_cdf, ncx2_sf, ncx2_pdf, ncx2_moment
from .pricing import OptionSpec, PriceSurface, price_european, delta
from .pricing import build_surface, pde_residual_q, growth_bound_check
from .hjb import Grid2D, CoeffField, SolveReport
from .hjb import solve_linear_parabolic, psi_apply, solve_a, solve_b, solve_c
from .hjb import assemble_value, optimal_control, hjb_residual
from .hedging import StrategySpec, CostReport, simulate_hedge, naive_rate
from .hedging import admissibility_diagnostics, compare_strategies
from ._kernels import backend_name

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "TimeGrid", "SamplePath", "simulate_paths",
    "transition_density", "spot_power_moment", "sample_transition_exact",
    "NoncentralChiSq", "ncx2_cdf", "ncx2_sf", "ncx2_pdf", "ncx2_moment",
    "OptionSpec", "PriceSurface", "price_european", "delta",
    "build_surface", "pde_residual_q", "growth_bound_check",
    "Grid2D", "CoeffField", "SolveReport",
    "solve_linear_parabolic", "psi_apply", "solve_a", "solve_b", "solve_c",
    "assemble_value", "optimal_control", "hjb_residual",
    "StrategySpec", "CostReport", "simulate_hedge", "naive_rate",
    "admissibility_diagnostics", "compare_strategies",
    "backend_name", "__version__",
]
