"""Threshold equilibria for optimal stopping under mixed exponential discounting.

Closed-form solver for the driftless-GBM real-option problem, a grid-based
verifier of the equilibrium conditions, and a Monte Carlo engine for
local-time-pushed randomized stopping rules.
"""

from .core import (
    ConsistencyError,
    CustomProblem,
    DiffusionSpec,
    DiscountMixture,
    GeneralMixedStrategy,
    Intensity,
    MixedThresholdStrategy,
    NumericalError,
    PayoffSpec,
    ProblemValidationError,
    RealOptionProblem,
    RegimeError,
    RootNotFoundError,
    validate,
)
from .closedform import (
    EquilibriumSolution,
    Regime,
    alpha,
    classify_regime,
    linear_coefficients,
    mixed_candidate,
    pure_candidate,
    regime_condition,
    solve,
    value_J,
    value_J_prime,
    value_w,
)
from .verify import (
    ConditionReport,
    FDResult,
    Grid,
    Tolerances,
    ansatz_residual,
    check_conditions,
    fd_solve_w,
    jump_check,
    smoothfit_root,
)
from .mc import (
    Estimate,
    IdentityResult,
    PathOutcome,
    SimConfig,
    SmallTimeRow,
    SurvivalPoint,
    estimate_J,
    estimate_w,
    identity_check,
    simulate_path,
    smalltime_diagnostics,
    survival_check,
)

__version__ = "0.1.0"

__all__ = [
    "ConsistencyError", "CustomProblem", "DiffusionSpec", "DiscountMixture",
    "GeneralMixedStrategy", "Intensity", "MixedThresholdStrategy",
    "NumericalError", "PayoffSpec", "ProblemValidationError",
    "RealOptionProblem", "RegimeError", "RootNotFoundError", "validate",
    "EquilibriumSolution", "Regime", "alpha", "classify_regime",
    "linear_coefficients", "mixed_candidate", "pure_candidate",
    "regime_condition", "solve", "value_J", "value_J_prime", "value_w",
    "ConditionReport", "FDResult", "Grid", "Tolerances", "ansatz_residual",
    "check_conditions", "fd_solve_w", "jump_check", "smoothfit_root",
    "Estimate", "IdentityResult", "PathOutcome", "SimConfig", "SmallTimeRow",
    "SurvivalPoint", "estimate_J", "estimate_w", "identity_check",
    "simulate_path", "smalltime_diagnostics", "survival_check",
]
