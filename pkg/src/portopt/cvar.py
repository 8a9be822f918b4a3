"""Scenario-based VaR/CVaR measurement and CVaR portfolio optimization.

Losses are pure return losses, loss = -w'y per scenario y, with no
benchmark. CVaR minimization uses the standard linearization: an auxiliary
threshold variable plus one nonnegative excess variable per scenario turns
min CVaR into a linear program the dense simplex handles.

Four constraint strategies are supported: unconstrained (free weights),
long-only, box bounds and equal weights. The equal-weight strategy is a
closed form and never touches the LP. The unconstrained strategy with no
mean target is rejected upfront: with unrestricted shorting the scenario
CVaR is typically unbounded below, so a mean constraint (here) or a CVaR
budget (in the max-return program) must pin the problem down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import ReturnPanel
from .errors import (
    ConfigError,
    DataError,
    InfeasibleProblemError,
    UnboundedProblemError,
)
from .meanvar import WeightVector
from .numerics import LinearProgram, lp_solve

STRATEGY_KINDS = ("unconstrained", "long_only", "box", "equal_weight")


@dataclass(frozen=True)
class ScenarioMatrix:
    """Empirical scenario set: rows are periods, columns are assets."""

    asset_ids: list[str]
    scenarios: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scenarios", np.asarray(self.scenarios, dtype=float))
        object.__setattr__(
            self, "probabilities", np.asarray(self.probabilities, dtype=float)
        )
        s, n = self.scenarios.shape
        if s < 2:
            raise DataError("at least 2 scenarios are required")
        if n != len(self.asset_ids):
            raise DataError("scenario columns do not match asset labels")
        if self.probabilities.shape != (s,):
            raise DataError("one probability per scenario is required")
        if np.any(self.probabilities < 0):
            raise DataError("negative scenario probability")
        if abs(float(self.probabilities.sum()) - 1.0) > 1e-12:
            raise DataError("scenario probabilities must sum to 1")

    @classmethod
    def from_panel(cls, panel: ReturnPanel) -> "ScenarioMatrix":
        s = panel.n_periods
        return cls(list(panel.asset_ids), panel.values.copy(), np.full(s, 1.0 / s))

    @property
    def n_assets(self) -> int:
        return self.scenarios.shape[1]

    @property
    def n_scenarios(self) -> int:
        return self.scenarios.shape[0]

    @property
    def mean_returns(self) -> np.ndarray:
        return self.probabilities @ self.scenarios


@dataclass(frozen=True)
class StrategyConstraint:
    """Weight restriction applied by the optimizer."""

    kind: str
    lower: float | None = None
    upper: float | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ConfigError(f"unknown strategy kind: {self.kind}")
        if self.kind == "box":
            if self.lower is None or self.upper is None:
                raise ConfigError("box strategy requires both bounds")
            if not self.lower < self.upper:
                raise ConfigError("box lower bound must be below upper bound")

    @classmethod
    def unconstrained(cls) -> "StrategyConstraint":
        return cls("unconstrained")

    @classmethod
    def long_only(cls) -> "StrategyConstraint":
        return cls("long_only")

    @classmethod
    def box(cls, lower: float, upper: float) -> "StrategyConstraint":
        return cls("box", lower, upper)

    @classmethod
    def equal_weight(cls) -> "StrategyConstraint":
        return cls("equal_weight")

    def weight_bounds(self) -> tuple[float | None, float | None]:
        if self.kind == "long_only":
            return (0.0, None)
        if self.kind == "box":
            return (self.lower, self.upper)
        return (None, None)


@dataclass(frozen=True)
class CvarReport:
    """Outcome of one CVaR measurement or optimization."""

    alpha: float
    var: float
    cvar: float
    weights: WeightVector
    mean_return: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.cvar < self.var - 1e-9:
            raise ValueError("cvar below var")


def _check_alpha(alpha: float) -> None:
    if not 0.5 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0.5, 1), got {alpha}")


def portfolio_loss_scenarios(w: WeightVector, sc: ScenarioMatrix) -> np.ndarray:
    """Per-scenario portfolio losses, loss_s = -sum_j w_j y_sj."""
    if list(w.asset_ids) != list(sc.asset_ids):
        raise DataError("weight and scenario universes differ")
    return -(sc.scenarios @ w.weights)


def empirical_var_cvar(losses, probabilities, alpha: float) -> tuple[float, float]:
    """VaR and CVaR of a discrete loss distribution.

    VaR is the smallest loss whose cumulative probability reaches alpha.
    CVaR evaluates the threshold-plus-scaled-excess form at that VaR, which
    handles probability atoms consistently and never falls below VaR.
    """
    _check_alpha(alpha)
    losses = np.asarray(losses, dtype=float)
    probabilities = np.asarray(probabilities, dtype=float)
    if losses.shape != probabilities.shape or losses.ndim != 1:
        raise ValueError("losses and probabilities must be equal-length vectors")
    order = np.argsort(losses, kind="stable")
    cum = np.cumsum(probabilities[order])
    pos = int(np.searchsorted(cum, alpha - 1e-12))
    pos = min(pos, losses.size - 1)
    var = float(losses[order][pos])
    excess = np.maximum(losses - var, 0.0)
    cvar = var + float(probabilities @ excess) / (1.0 - alpha)
    return var, cvar


def _equal_weight_report(sc: ScenarioMatrix, alpha: float) -> CvarReport:
    n = sc.n_assets
    w = WeightVector(list(sc.asset_ids), np.full(n, 1.0 / n))
    var, cvar = empirical_var_cvar(
        portfolio_loss_scenarios(w, sc), sc.probabilities, alpha
    )
    return CvarReport(alpha, var, cvar, w, float(sc.mean_returns @ w.weights))


def _strategy_lp_parts(sc: ScenarioMatrix, alpha: float,
                       strategy: StrategyConstraint):
    """Common pieces of the linearized programs over (w, threshold, excess)."""
    s, n = sc.n_scenarios, sc.n_assets
    # Scenario rows: -y_s.w - zeta - u_s <= 0.
    ineq = np.zeros((s, n + 1 + s))
    ineq[:, :n] = -sc.scenarios
    ineq[:, n] = -1.0
    ineq[:, n + 1 :] = -np.eye(s)
    senses = ["<="] * s
    rhs = np.zeros(s)
    wb = strategy.weight_bounds()
    bounds = [wb] * n + [(None, None)] + [(0.0, None)] * s
    budget = np.zeros(n + 1 + s)
    budget[:n] = 1.0
    return ineq, rhs, senses, bounds, budget


def _solve_or_raise(lp: LinearProgram):
    sol = lp_solve(lp)
    if sol.status == "infeasible":
        raise InfeasibleProblemError("constraints admit no portfolio")
    if sol.status == "unbounded":
        raise UnboundedProblemError("objective is unbounded for this strategy")
    return sol


def minimize_cvar(sc: ScenarioMatrix, alpha: float,
                  target_mean: float | None = None,
                  strategy: StrategyConstraint | None = None) -> CvarReport:
    """Minimize portfolio CVaR over the scenario set.

    ``target_mean`` adds the optional scenario-mean constraint w'E = target;
    the equal-weight strategy ignores it. The report carries the achieved
    CVaR, the optimal threshold as ``var`` and the scenario-mean return.
    """
    _check_alpha(alpha)
    strategy = strategy or StrategyConstraint.long_only()
    if strategy.kind == "equal_weight":
        return _equal_weight_report(sc, alpha)
    if strategy.kind == "unconstrained" and target_mean is None:
        raise ConfigError(
            "unconstrained CVaR minimization needs a mean target; without one "
            "the objective is typically unbounded (or use the max-return "
            "program with a CVaR budget)"
        )
    s, n = sc.n_scenarios, sc.n_assets
    ineq, rhs, senses, bounds, budget = _strategy_lp_parts(sc, alpha, strategy)
    cost = np.zeros(n + 1 + s)
    cost[n] = 1.0
    cost[n + 1 :] = sc.probabilities / (1.0 - alpha)
    eq_rows = [budget]
    eq_rhs = [1.0]
    if target_mean is not None:
        mean_row = np.zeros(n + 1 + s)
        mean_row[:n] = sc.mean_returns
        eq_rows.append(mean_row)
        eq_rhs.append(float(target_mean))
    sol = _solve_or_raise(
        LinearProgram(
            objective=cost,
            eq_matrix=np.vstack(eq_rows),
            eq_rhs=np.array(eq_rhs),
            ineq_matrix=ineq,
            ineq_rhs=rhs,
            ineq_senses=senses,
            bounds=bounds,
        )
    )
    w = WeightVector(list(sc.asset_ids), sol.x[:n])
    return CvarReport(
        alpha=alpha,
        var=float(sol.x[n]),
        cvar=float(sol.objective),
        weights=w,
        mean_return=float(sc.mean_returns @ w.weights),
    )


def max_return_with_cvar_cap(sc: ScenarioMatrix, alpha: float, cvar_cap: float,
                             strategy: StrategyConstraint | None = None) -> CvarReport:
    """Maximize scenario-mean return subject to CVaR <= cvar_cap.

    The report's var/cvar re-measure the optimal portfolio with the
    empirical estimator, since the program only bounds the linearized value.
    """
    _check_alpha(alpha)
    strategy = strategy or StrategyConstraint.long_only()
    if strategy.kind == "equal_weight":
        return _equal_weight_report(sc, alpha)
    s, n = sc.n_scenarios, sc.n_assets
    ineq, rhs, senses, bounds, budget = _strategy_lp_parts(sc, alpha, strategy)
    cap_row = np.zeros(n + 1 + s)
    cap_row[n] = 1.0
    cap_row[n + 1 :] = sc.probabilities / (1.0 - alpha)
    ineq = np.vstack([ineq, cap_row])
    rhs = np.concatenate([rhs, [float(cvar_cap)]])
    senses = senses + ["<="]
    cost = np.zeros(n + 1 + s)
    cost[:n] = -sc.mean_returns
    sol = _solve_or_raise(
        LinearProgram(
            objective=cost,
            eq_matrix=budget[None, :],
            eq_rhs=np.array([1.0]),
            ineq_matrix=ineq,
            ineq_rhs=rhs,
            ineq_senses=senses,
            bounds=bounds,
        )
    )
    w = WeightVector(list(sc.asset_ids), sol.x[:n])
    var, cvar = empirical_var_cvar(
        portfolio_loss_scenarios(w, sc), sc.probabilities, alpha
    )
    return CvarReport(alpha, var, cvar, w, float(sc.mean_returns @ w.weights))


# ---------------------------------------------------------------------------
# Rolling backtest
# ---------------------------------------------------------------------------

BACKTEST_MODES = ("min_cvar", "max_return")


@dataclass(frozen=True)
class DetailRecord:
    """One rebalance-date outcome for one strategy and universe."""

    date: str
    strategy: str
    universe: str  # "with" | "without"
    weights: dict[str, float] | None
    realized_return: float
    cvar: float
    insample_mean_return: float
    status: str  # "ok" | "infeasible" | "unbounded"


@dataclass(frozen=True)
class SummaryRow:
    strategy: str
    universe: str
    avg_designated_weight: float | None
    avg_return: float
    avg_cvar: float
    risk_return_ratio: float | None
    n_dates: int
    n_failed: int


@dataclass(frozen=True)
class BacktestSummary:
    mode: str
    alpha: float
    window: int
    designated_asset: str
    rows: list[SummaryRow]
    details: list[DetailRecord] = field(repr=False, default_factory=list)


def _anchor_target(sc: ScenarioMatrix, alpha: float, mode: str) -> float:
    """Per-universe anchor: the equal-weight portfolio pins the free knob.

    The mean target for the unconstrained risk-minimization and the CVaR
    budget of the max-return program both come from the same universe's
    equal-weight portfolio, which is always attainable.
    """
    ew = _equal_weight_report(sc, alpha)
    return ew.mean_return if mode == "min_cvar" else ew.cvar


def _solve_rebalance(sc: ScenarioMatrix, alpha: float, mode: str,
                     strategy: StrategyConstraint) -> CvarReport:
    if mode == "min_cvar":
        target = None
        if strategy.kind == "unconstrained":
            target = _anchor_target(sc, alpha, mode)
        return minimize_cvar(sc, alpha, target, strategy)
    cap = _anchor_target(sc, alpha, mode)
    return max_return_with_cvar_cap(sc, alpha, cap, strategy)


def rolling_backtest(panel: ReturnPanel, alpha: float,
                     strategies: list[StrategyConstraint], window: int,
                     designated_asset: str, *, mode: str = "min_cvar") -> BacktestSummary:
    """Monthly-rebalanced backtest over a trailing scenario window.

    At each rebalance date the trailing ``window`` months form the scenario
    set; the chosen portfolio's next-month realized return and in-sample
    CVaR are recorded. Everything runs twice, with and without the
    designated asset, and the summary averages each strategy/universe pair
    over its successful rebalance dates. Dates where a program is
    infeasible or unbounded are recorded and excluded from the averages.
    """
    _check_alpha(alpha)
    if mode not in BACKTEST_MODES:
        raise ConfigError(f"unknown backtest mode: {mode}")
    if designated_asset not in panel.asset_ids:
        raise DataError(f"designated asset not in panel: {designated_asset}")
    if panel.n_periods < window + 1:
        raise DataError(
            f"panel has {panel.n_periods} periods; window {window} is too long"
        )
    if not strategies:
        raise ConfigError("no strategies configured")

    universes = {"with": panel, "without": panel.drop(designated_asset)}
    details: list[DetailRecord] = []
    rows: list[SummaryRow] = []
    rebalance_ts = range(window - 1, panel.n_periods - 1)

    for strategy in strategies:
        for universe, upanel in universes.items():
            rets, cvars, weights_d = [], [], []
            n_failed = 0
            for t in rebalance_ts:
                date = panel.dates[t]
                window_panel = ReturnPanel(
                    list(upanel.asset_ids),
                    list(upanel.dates[t - window + 1 : t + 1]),
                    upanel.values[t - window + 1 : t + 1],
                    upanel.convention,
                )
                sc = ScenarioMatrix.from_panel(window_panel)
                try:
                    report = _solve_rebalance(sc, alpha, mode, strategy)
                except InfeasibleProblemError:
                    status = "infeasible"
                except UnboundedProblemError:
                    status = "unbounded"
                else:
                    status = "ok"
                if status != "ok":
                    n_failed += 1
                    details.append(
                        DetailRecord(date, strategy.kind, universe, None,
                                     math.nan, math.nan, math.nan, status)
                    )
                    continue
                realized = float(
                    upanel.values[t + 1] @ report.weights.weights
                )
                rets.append(realized)
                cvars.append(report.cvar)
                if universe == "with":
                    weights_d.append(
                        report.weights.as_dict()[designated_asset]
                    )
                details.append(
                    DetailRecord(date, strategy.kind, universe,
                                 report.weights.as_dict(), realized,
                                 report.cvar, report.mean_return, "ok")
                )
            avg_ret = float(np.mean(rets)) if rets else math.nan
            avg_cvar = float(np.mean(cvars)) if cvars else math.nan
            ratio = avg_ret / avg_cvar if avg_cvar > 0 else None
            rows.append(
                SummaryRow(
                    strategy=strategy.kind,
                    universe=universe,
                    avg_designated_weight=(
                        float(np.mean(weights_d)) if weights_d else None
                    ),
                    avg_return=avg_ret,
                    avg_cvar=avg_cvar,
                    risk_return_ratio=ratio,
                    n_dates=len(rets),
                    n_failed=n_failed,
                )
            )
    return BacktestSummary(mode, alpha, window, designated_asset, rows, details)
