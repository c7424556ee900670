"""Optimal consumption and portfolio choice with jump risk in large markets."""

from .errors import (
    AssumptionViolated,
    ConfigError,
    DegenerateCorrelation,
    EmptyPositiveSupport,
    InvalidGamma,
    InvalidMeasure,
    JumpfolioError,
    NonConvergence,
    NonCoercive,
    NonPositiveExcessReturn,
    NotPositiveDefinite,
    OutOfRegime,
    ShapeMismatch,
    SingularSigma,
    SolvencyViolation,
    TransversalityViolated,
    TransversalityWarning,
)
from .levy import (
    AsymmetricPowerLaw,
    DiscreteCompound,
    LevyJumpMeasure,
    PointMass,
    UniformDensity,
    admissible_interval,
    mean_positive_jump,
    psi,
    psi_log,
    psi_prime,
    psi_second,
)
from .market import (
    MultiSectorMarket,
    OneSectorMarket,
    RawMarket,
    build_sigma,
    decompose_returns,
    decompose_sigma,
    invariance_residual,
)
from .sim import SimConfig, estimate_value, optimality_check, scaling_check, simulate_wealth
from .solver import (
    ExponentialUtility,
    LogUtility,
    Policy,
    PowerUtility,
    solve_bar_multisector,
    solve_bar_one_sector,
    solve_exponential,
    solve_full_numeric,
    solve_log,
    solve_merton,
    solve_policy,
    three_funds,
)
from .statics import (
    SweepSpec,
    asymptotic_behavior,
    critical_jump_size,
    critical_lambda,
    large_n_limit,
    sensitivity,
    sweep,
)

__version__ = "0.1.0"
