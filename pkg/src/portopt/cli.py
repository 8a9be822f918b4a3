"""Batch command-line front end.

One declarative INI-style config drives a run; command-line flags override
config values. All randomness flows from the single configured seed,
expanded deterministically per component, so identical config plus seed
gives byte-identical reports.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 estimation did not converge (outputs are still written).
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cvar import StrategyConstraint, rolling_backtest
from .data import (
    ReturnPanel,
    correlation_matrix,
    descriptive_stats,
    load_inflation_csv,
    load_panel_csv,
    to_nominal_returns,
    to_real_returns,
)
from .errors import ConfigError, DataError, NotPositiveDefiniteError, PortoptError
from .fixture import write_fixture
from .meanvar import gmv_weights, trace_frontier
from .regime import em_fit, hamilton_filter, kim_smooth, regime_conditional_weights
from .reports import (
    write_backtest_detail,
    write_backtest_summary,
    write_correlation,
    write_fit_json,
    write_frontier,
    write_probability_trace,
    write_stats,
    write_weights,
)

STRATEGY_NAMES = ("unconstrained", "long_only", "box", "equal_weight")


@dataclass
class RunConfig:
    """Everything one batch run needs; see the bundled example config."""

    prices_path: str | None = None
    cpi_path: str | None = None
    universe: list[str] | None = None
    designated_asset: str = "BTC"
    alpha: float = 0.95
    window: int = 36
    strategies: list[str] = field(default_factory=lambda: list(STRATEGY_NAMES))
    box_lower: float = -1.0
    box_upper: float = 1.0
    mu_grid: list[float] | None = None
    mu_grid_points: int = 21
    ridge: bool = False
    n_states: int = 2
    order: int = 0
    n_starts: int = 8
    max_iterations: int = 1000
    tol: float = 1e-8
    state_weights: str = "none"  # none | meanvar | cvar
    sdf_discount: float = 0.96
    sdf_risk_aversion: float = 2.0
    seed: int = 0
    out_dir: str = "out"
    format: str = "csv"
    workers: int = 1

    def validate(self) -> None:
        if not 0.5 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0.5, 1), got {self.alpha}")
        if self.window < 12:
            raise ConfigError(f"window must be at least 12 months, got {self.window}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format}")
        for s in self.strategies:
            if s not in STRATEGY_NAMES:
                raise ConfigError(f"unknown strategy: {s}")
        if not self.box_lower < self.box_upper:
            raise ConfigError("box_lower must be below box_upper")
        if self.n_states < 1:
            raise ConfigError("n_states must be at least 1")
        if self.order < 0:
            raise ConfigError("order must be nonnegative")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.state_weights not in ("none", "meanvar", "cvar"):
            raise ConfigError(f"unknown state_weights mode: {self.state_weights}")


def _parse_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def load_config(path: str | Path) -> RunConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    cfg = RunConfig()

    def _get(section, key, cast, current):
        if parser.has_option(section, key):
            raw = parser.get(section, key)
            try:
                return cast(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {raw}") from exc
        return current

    cfg.prices_path = _get("data", "prices", str, cfg.prices_path)
    cfg.cpi_path = _get("data", "cpi", str, cfg.cpi_path)
    cfg.universe = _get("data", "universe", _parse_list, cfg.universe)
    cfg.designated_asset = _get("data", "designated_asset", str, cfg.designated_asset)
    cfg.alpha = _get("cvar", "alpha", float, cfg.alpha)
    cfg.window = _get("cvar", "window", int, cfg.window)
    cfg.strategies = _get("cvar", "strategies", _parse_list, cfg.strategies)
    cfg.box_lower = _get("cvar", "box_lower", float, cfg.box_lower)
    cfg.box_upper = _get("cvar", "box_upper", float, cfg.box_upper)
    cfg.mu_grid = _get(
        "meanvar", "mu_grid", lambda s: [float(v) for v in _parse_list(s)], cfg.mu_grid
    )
    cfg.mu_grid_points = _get("meanvar", "grid_points", int, cfg.mu_grid_points)
    cfg.ridge = _get("meanvar", "ridge", lambda s: s.lower() == "true", cfg.ridge)
    cfg.n_states = _get("regime", "k", int, cfg.n_states)
    cfg.order = _get("regime", "p", int, cfg.order)
    cfg.n_starts = _get("regime", "n_starts", int, cfg.n_starts)
    cfg.max_iterations = _get("regime", "max_iterations", int, cfg.max_iterations)
    cfg.tol = _get("regime", "tol", float, cfg.tol)
    cfg.state_weights = _get("regime", "state_weights", str, cfg.state_weights)
    cfg.sdf_discount = _get("sdf", "beta", float, cfg.sdf_discount)
    cfg.sdf_risk_aversion = _get("sdf", "gamma", float, cfg.sdf_risk_aversion)
    cfg.seed = _get("run", "seed", int, cfg.seed)
    cfg.out_dir = _get("run", "out_dir", str, cfg.out_dir)
    cfg.format = _get("run", "format", str, cfg.format)
    cfg.workers = _get("run", "workers", int, cfg.workers)
    return cfg


def _component_seed(cfg: RunConfig, component: str) -> int:
    """Expand the run seed deterministically per component name."""
    offsets = {"fixture": 0, "regime": 1, "weights": 2}
    return cfg.seed * 1000 + offsets[component]


def load_real_panel(cfg: RunConfig) -> ReturnPanel:
    if not cfg.prices_path:
        raise ConfigError("no price CSV configured (set [data] prices or --prices)")
    if not cfg.cpi_path:
        raise ConfigError("no CPI CSV configured (set [data] cpi or --cpi)")
    series = load_panel_csv(cfg.prices_path)
    nominal = to_nominal_returns(series)
    panel = to_real_returns(nominal, load_inflation_csv(cfg.cpi_path))
    if cfg.universe:
        missing = [a for a in cfg.universe if a not in panel.asset_ids]
        if missing:
            raise ConfigError(f"universe assets not in input: {missing}")
        panel = panel.select(cfg.universe)
    return panel


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fixture(cfg: RunConfig) -> int:
    prices, cpi = write_fixture(_outdir(cfg), _component_seed(cfg, "fixture"))
    print(f"wrote {prices}")
    print(f"wrote {cpi}")
    return 0


def cmd_stats(cfg: RunConfig) -> int:
    panel = load_real_panel(cfg)
    out = _outdir(cfg)
    ext = cfg.format
    stats_path = write_stats(out / f"stats.{ext}", descriptive_stats(panel), ext)
    corr = correlation_matrix(panel)
    corr_path = write_correlation(
        out / f"correlation.{ext}", list(panel.asset_ids), corr, ext
    )
    print(f"wrote {stats_path}")
    print(f"wrote {corr_path}")
    return 0


def _sample_cov(values: np.ndarray) -> np.ndarray:
    centered = values - values.mean(axis=0)
    return centered.T @ centered / (values.shape[0] - 1)


def cmd_meanvar(cfg: RunConfig) -> int:
    panel = load_real_panel(cfg)
    if panel.n_assets < 2:
        raise ConfigError("mean-variance analysis needs at least 2 assets")
    means = panel.values.mean(axis=0)
    cov = _sample_cov(panel.values)
    out = _outdir(cfg)
    ext = cfg.format

    try:
        gmv = gmv_weights(cov, ridge=cfg.ridge, asset_ids=list(panel.asset_ids))
        gmv_path = write_weights(out / f"gmv_weights.{ext}", gmv, ext)
        grid = cfg.mu_grid
        if grid is None:
            lo, hi = float(means.min()), float(means.max())
            grid = list(np.linspace(lo, hi, cfg.mu_grid_points))
        points = trace_frontier(
            means, cov, grid, ridge=cfg.ridge, asset_ids=list(panel.asset_ids)
        )
        frontier_path = write_frontier(out / "frontier.csv", points)
    except NotPositiveDefiniteError as exc:
        raise DataError(
            f"sample covariance is not positive definite ({exc}); if the "
            "universe has collinear columns, retry with [meanvar] ridge = true"
        ) from exc
    print(f"wrote {gmv_path}")
    print(f"wrote {frontier_path}")
    return 0


def _build_strategies(cfg: RunConfig) -> list[StrategyConstraint]:
    strategies = []
    for name in cfg.strategies:
        if name == "box":
            strategies.append(StrategyConstraint.box(cfg.box_lower, cfg.box_upper))
        else:
            strategies.append(StrategyConstraint(name))
    return strategies


def cmd_cvar(cfg: RunConfig) -> int:
    panel = load_real_panel(cfg)
    strategies = _build_strategies(cfg)
    out = _outdir(cfg)
    ext = cfg.format
    for mode in ("min_cvar", "max_return"):
        summary = rolling_backtest(
            panel, cfg.alpha, strategies, cfg.window, cfg.designated_asset,
            mode=mode,
        )
        s_path = write_backtest_summary(
            out / f"cvar_summary_{mode}.{ext}", summary, ext
        )
        d_path = write_backtest_detail(
            out / f"cvar_detail_{mode}.csv", summary, list(panel.asset_ids)
        )
        print(f"wrote {s_path}")
        print(f"wrote {d_path}")
    return 0


def cmd_regime(cfg: RunConfig) -> int:
    panel = load_real_panel(cfg)
    fit = em_fit(
        panel, cfg.n_states, cfg.order,
        n_starts=cfg.n_starts, max_iterations=cfg.max_iterations,
        tol=cfg.tol, seed=_component_seed(cfg, "regime"),
    )
    out = _outdir(cfg)
    fit_path = write_fit_json(out / "regime_fit.json", fit)
    probs = kim_smooth(fit.model, hamilton_filter(fit.model, panel))
    trace_path = write_probability_trace(out / "regime_probabilities.csv", probs)
    print(f"wrote {fit_path}")
    print(f"wrote {trace_path}")
    if cfg.state_weights != "none":
        per_state = regime_conditional_weights(
            fit, cfg.state_weights, alpha=cfg.alpha,
            seed=_component_seed(cfg, "weights"),
        )
        for s, weights in enumerate(per_state):
            path = write_weights(
                out / f"state_{s + 1}_weights.{cfg.format}", weights, cfg.format
            )
            print(f"wrote {path}")
    if not fit.converged:
        print(
            f"warning: EM stopped after {fit.iterations} iterations without "
            "meeting the tolerance; best model written",
            file=sys.stderr,
        )
        return 4
    return 0


_COMMANDS = {
    "stats": cmd_stats,
    "meanvar": cmd_meanvar,
    "cvar": cmd_cvar,
    "regime": cmd_regime,
    "fixture": cmd_fixture,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="portopt",
        description="Portfolio allocation toolkit: statistics, mean-variance "
                    "frontier, CVaR backtests and regime switching.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI config file; flags override it")
        p.add_argument("--out", help="output directory")
        p.add_argument("--format", choices=("csv", "json"), help="report format")
        p.add_argument("--seed", type=int, help="run seed")
        p.add_argument("--prices", help="price CSV path")
        p.add_argument("--cpi", help="inflation CSV path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.out:
            cfg = replace(cfg, out_dir=args.out)
        if args.format:
            cfg = replace(cfg, format=args.format)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.prices:
            cfg = replace(cfg, prices_path=args.prices)
        if args.cpi:
            cfg = replace(cfg, cpi_path=args.cpi)
        cfg.validate()
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except PortoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
