"""Portfolio allocation toolkit.

Real-return construction, descriptive statistics, the closed-form
minimum-variance frontier, scenario-based CVaR optimization under four
constraint strategies with a rolling backtest, and a k-state Markov
switching model with discount-factor pricing identities.
"""

from .cvar import (
    BacktestSummary,
    CvarReport,
    ScenarioMatrix,
    StrategyConstraint,
    empirical_var_cvar,
    max_return_with_cvar_cap,
    minimize_cvar,
    portfolio_loss_scenarios,
    rolling_backtest,
)
from .data import (
    InflationSeries,
    PriceSeries,
    ReturnPanel,
    StatsRecord,
    correlation_matrix,
    descriptive_stats,
    load_inflation_csv,
    load_panel_csv,
    to_nominal_returns,
    to_real_returns,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    DegenerateFrontierError,
    InfeasibleProblemError,
    LpIterationLimitError,
    NotPositiveDefiniteError,
    PortoptError,
    UnboundedProblemError,
    ZeroVarianceError,
)
from .fixture import generate_fixture, write_fixture
from .meanvar import (
    FrontierCoefficients,
    FrontierPoint,
    WeightVector,
    efficient_weights,
    frontier_coefficients,
    frontier_variance,
    gmv_weights,
    trace_frontier,
)
from .numerics import (
    LinearProgram,
    LpSolution,
    SymMatrix,
    lp_solve,
    mvn_logpdf,
    smallest_eigenvalue,
    spd_factor_solve,
)
from .regime import (
    FilterOutput,
    FitReport,
    MsModel,
    SdfParams,
    em_fit,
    hamilton_filter,
    kim_smooth,
    regime_conditional_weights,
    regime_risk_premium,
    sample_growth,
    sdf_value,
    simulate,
    stationary_distribution,
)

__version__ = "0.1.0"
