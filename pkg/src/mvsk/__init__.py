"""Matrix-free affine-normal solver for long-only mean-variance-skewness-kurtosis portfolios."""

from .bench import (
    BenchmarkSpec,
    gen_conditioned_instance,
    gen_uniform_instance,
    run_benchmark,
    stress_profiles,
)
from .estimator import MVSKPortfolio
from .exceptions import (
    ConfigError,
    ContractViolation,
    DataError,
    DimensionError,
    DomainError,
    MVSKError,
    NumericError,
    ParseError,
    StationaryPointError,
)
from .instance import (
    PreferenceCoefficients,
    ReturnPanel,
    center_panel,
    crra_coefficients,
    load_returns,
    save_returns,
)
from .oracle import MVSKObjective, gradient, hvp, third_action, value
from .solver import SolveReport, SolverConfig, preset, solve
from .verification import convexity_certificate, regularity_constants

__version__ = "0.1.0"

__all__ = [
    "BenchmarkSpec", "ConfigError", "ContractViolation", "DataError", "DimensionError",
    "DomainError", "MVSKError", "MVSKObjective", "MVSKPortfolio", "NumericError", "ParseError",
    "PreferenceCoefficients", "ReturnPanel", "SolveReport", "SolverConfig",
    "StationaryPointError", "center_panel", "convexity_certificate", "crra_coefficients",
    "gen_conditioned_instance", "gen_uniform_instance", "gradient", "hvp", "load_returns",
    "preset", "regularity_constants", "run_benchmark", "save_returns", "solve",
    "stress_profiles", "third_action", "value",
]
