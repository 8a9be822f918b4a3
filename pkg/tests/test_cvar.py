import math

import numpy as np
import pytest

from portopt.cvar import (
    ScenarioMatrix,
    StrategyConstraint,
    empirical_var_cvar,
    max_return_with_cvar_cap,
    minimize_cvar,
    portfolio_loss_scenarios,
    rolling_backtest,
)
from portopt.data import ReturnPanel
from portopt.errors import ConfigError, DataError, InfeasibleProblemError
from portopt.meanvar import WeightVector

from oracles import empirical_cvar_direct, grid_min_cvar


def make_panel(values, ids=None):
    values = np.asarray(values, dtype=float)
    ids = ids or [f"A{j}" for j in range(values.shape[1])]
    dates = [f"20{i // 12 + 10:02d}-{i % 12 + 1:02d}" for i in range(values.shape[0])]
    return ReturnPanel(ids, dates, values, "simulated")


def uniform_scenarios(values, ids=None):
    panel = make_panel(values, ids)
    return ScenarioMatrix.from_panel(panel)


class TestLossScenarios:
    def test_sign_flip(self):
        w = WeightVector(["A"], np.array([1.0]))
        sc = uniform_scenarios(np.array([[0.1], [-0.2]]), ["A"])
        assert portfolio_loss_scenarios(w, sc) == pytest.approx([-0.1, 0.2], abs=1e-15)

    def test_offsetting_positions(self):
        w = WeightVector(["A", "B"], np.array([0.5, 0.5]))
        sc = uniform_scenarios(np.array([[0.1, -0.1], [0.0, 0.0]]), ["A", "B"])
        assert portfolio_loss_scenarios(w, sc)[0] == pytest.approx(0.0, abs=1e-15)

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(3)
        sc = uniform_scenarios(rng.normal(0, 0.05, (9, 3)))
        w = WeightVector(sc.asset_ids, np.array([0.2, 0.3, 0.5]))
        losses = portfolio_loss_scenarios(w, sc)
        for s in range(9):
            direct = -sum(w.weights[j] * sc.scenarios[s, j] for j in range(3))
            assert losses[s] == pytest.approx(direct, abs=1e-15)

    def test_universe_mismatch(self):
        w = WeightVector(["X"], np.array([1.0]))
        sc = uniform_scenarios(np.zeros((2, 1)) + 0.1, ["A"])
        with pytest.raises(DataError):
            portfolio_loss_scenarios(w, sc)


class TestEmpiricalVarCvar:
    def test_quarter_tail(self):
        var, cvar = empirical_var_cvar([1, 2, 3, 4], [0.25] * 4, 0.75)
        assert (var, cvar) == (3.0, 4.0)

    def test_point_mass(self):
        for alpha in (0.6, 0.75, 0.95):
            var, cvar = empirical_var_cvar([7.0] * 5, [0.2] * 5, alpha)
            assert var == cvar == 7.0

    def test_negative_tail(self):
        var, cvar = empirical_var_cvar([-0.2, -0.1, 0, 0.1], [0.25] * 4, 0.75)
        assert var == pytest.approx(0.0, abs=1e-15)
        assert cvar == pytest.approx(0.1, abs=1e-15)

    def test_unsorted_input(self):
        var, cvar = empirical_var_cvar([4, 1, 3, 2], [0.25] * 4, 0.75)
        assert (var, cvar) == (3.0, 4.0)

    def test_matches_direct_tail_average(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = int(rng.integers(4, 40))
            losses = rng.standard_normal(n)
            alpha = float(rng.uniform(0.55, 0.98))
            var, cvar = empirical_var_cvar(losses, np.full(n, 1.0 / n), alpha)
            want_var, want_cvar = empirical_cvar_direct(losses, alpha)
            assert var == pytest.approx(want_var, abs=1e-12)
            assert cvar == pytest.approx(want_cvar, abs=1e-12)

    def test_cvar_at_least_var(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            n = int(rng.integers(2, 30))
            losses = rng.standard_normal(n) * rng.uniform(0.1, 10)
            p = rng.uniform(0.01, 1.0, n)
            p /= p.sum()
            alpha = float(rng.uniform(0.51, 0.99))
            var, cvar = empirical_var_cvar(losses, p, alpha)
            assert cvar >= var - 1e-9

    def test_translation_and_scaling(self):
        rng = np.random.default_rng(7)
        losses = rng.standard_normal(20)
        p = np.full(20, 0.05)
        var, cvar = empirical_var_cvar(losses, p, 0.9)
        var_t, cvar_t = empirical_var_cvar(losses + 0.25, p, 0.9)
        assert var_t == pytest.approx(var + 0.25, abs=1e-12)
        assert cvar_t == pytest.approx(cvar + 0.25, abs=1e-12)
        var_s, cvar_s = empirical_var_cvar(losses * 2.0, p, 0.9)
        assert var_s == var * 2.0
        assert cvar_s == cvar * 2.0

    def test_degenerate_alpha(self):
        with pytest.raises(ConfigError):
            empirical_var_cvar([1.0, 2.0], [0.5, 0.5], 0.4)

    def test_convexity_probe(self):
        rng = np.random.default_rng(8)
        sc = uniform_scenarios(rng.normal(0.01, 0.05, (24, 4)))
        for _ in range(50):
            w1 = rng.standard_normal(4)
            w1 /= w1.sum()
            w2 = rng.standard_normal(4)
            w2 /= w2.sum()
            mid = WeightVector(sc.asset_ids, (w1 + w2) / 2.0)
            alpha = float(rng.uniform(0.55, 0.98))
            _, c_mid = empirical_var_cvar(
                portfolio_loss_scenarios(mid, sc), sc.probabilities, alpha)
            _, c1 = empirical_var_cvar(
                portfolio_loss_scenarios(WeightVector(sc.asset_ids, w1), sc),
                sc.probabilities, alpha)
            _, c2 = empirical_var_cvar(
                portfolio_loss_scenarios(WeightVector(sc.asset_ids, w2), sc),
                sc.probabilities, alpha)
            assert c_mid <= 0.5 * c1 + 0.5 * c2 + 1e-9


class TestMinimizeCvar:
    def test_dominated_asset_excluded(self):
        values = np.array([[0.0, -0.5]] * 6)
        sc = uniform_scenarios(values)
        rep = minimize_cvar(sc, 0.95, None, StrategyConstraint.long_only())
        assert rep.weights.weights == pytest.approx([1.0, 0.0], abs=1e-9)
        assert rep.cvar == pytest.approx(0.0, abs=1e-9)

    def test_equal_weight_ignores_scenarios(self):
        rng = np.random.default_rng(9)
        sc = uniform_scenarios(rng.normal(0, 0.03, (10, 4)))
        rep = minimize_cvar(sc, 0.95, None, StrategyConstraint.equal_weight())
        assert rep.weights.weights == pytest.approx([0.25] * 4, abs=1e-15)

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(10)
        sc = uniform_scenarios(rng.normal(0.01, 0.04, (12, 3)))
        rep = minimize_cvar(sc, 0.9, None, StrategyConstraint.long_only())
        want, _ = grid_min_cvar(sc.scenarios, 0.9, 0.01)
        assert rep.cvar <= want + 1e-9
        assert rep.cvar == pytest.approx(want, abs=1e-6 + 2e-4)

    def test_lp_agrees_with_measure(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            sc = uniform_scenarios(rng.normal(0.0, 0.05, (15, 4)))
            rep = minimize_cvar(sc, 0.95, None, StrategyConstraint.long_only())
            _, cvar = empirical_var_cvar(
                portfolio_loss_scenarios(rep.weights, sc), sc.probabilities, 0.95)
            assert rep.cvar == pytest.approx(cvar, abs=1e-7)
            assert rep.cvar >= rep.var - 1e-9

    def test_mean_constraint_held(self):
        rng = np.random.default_rng(12)
        sc = uniform_scenarios(rng.normal(0.01, 0.05, (20, 4)))
        mu = float(sc.mean_returns.mean())
        rep = minimize_cvar(sc, 0.95, mu, StrategyConstraint.long_only())
        assert rep.mean_return == pytest.approx(mu, abs=1e-8)

    def test_unattainable_target_infeasible(self):
        rng = np.random.default_rng(13)
        sc = uniform_scenarios(rng.normal(0.01, 0.05, (20, 4)))
        with pytest.raises(InfeasibleProblemError):
            minimize_cvar(sc, 0.95, float(sc.mean_returns.max()) + 1.0,
                          StrategyConstraint.long_only())

    def test_unconstrained_needs_anchor(self):
        rng = np.random.default_rng(14)
        sc = uniform_scenarios(rng.normal(0.01, 0.05, (20, 4)))
        with pytest.raises(ConfigError):
            minimize_cvar(sc, 0.95, None, StrategyConstraint.unconstrained())

    def test_box_respected(self):
        rng = np.random.default_rng(15)
        sc = uniform_scenarios(rng.normal(0.01, 0.05, (20, 4)))
        rep = minimize_cvar(sc, 0.95, None, StrategyConstraint.box(-0.25, 0.6))
        assert np.all(rep.weights.weights >= -0.25 - 1e-9)
        assert np.all(rep.weights.weights <= 0.6 + 1e-9)

    def test_dominates_random_feasible_portfolios(self):
        rng = np.random.default_rng(16)
        sc = uniform_scenarios(rng.normal(0.0, 0.05, (18, 4)))
        rep = minimize_cvar(sc, 0.9, None, StrategyConstraint.long_only())
        draws = rng.dirichlet(np.ones(4), size=1000)
        losses = -(draws @ sc.scenarios.T)
        for i in range(1000):
            _, cvar = empirical_var_cvar(losses[i], sc.probabilities, 0.9)
            assert rep.cvar <= cvar + 1e-9


class TestMaxReturnWithCap:
    def test_cap_binds_and_return_improves(self):
        rng = np.random.default_rng(17)
        sc = uniform_scenarios(rng.normal(0.01, 0.05, (24, 4)))
        base = minimize_cvar(sc, 0.95, None, StrategyConstraint.long_only())
        cap = base.cvar + 0.02
        rep = max_return_with_cvar_cap(sc, 0.95, cap, StrategyConstraint.long_only())
        assert rep.mean_return >= base.mean_return - 1e-9
        assert rep.cvar <= cap + 1e-7

    def test_infeasible_cap(self):
        rng = np.random.default_rng(18)
        sc = uniform_scenarios(rng.normal(0.01, 0.05, (24, 4)))
        base = minimize_cvar(sc, 0.95, None, StrategyConstraint.long_only())
        with pytest.raises(InfeasibleProblemError):
            max_return_with_cvar_cap(sc, 0.95, base.cvar - 0.05,
                                     StrategyConstraint.long_only())


class TestGaussianConsistency:
    def test_single_asset_tail(self):
        rng = np.random.default_rng(20)
        mu, sigma, alpha = 0.01, 0.05, 0.95
        draws = rng.normal(mu, sigma, 200_000)
        losses = -draws
        var, cvar = empirical_var_cvar(
            losses, np.full(losses.size, 1.0 / losses.size), alpha)
        # closed form: -mu + sigma * pdf(ppf(alpha)) / (1 - alpha)
        from scipy.stats import norm
        want = -mu + sigma * norm.pdf(norm.ppf(alpha)) / (1 - alpha)
        assert cvar == pytest.approx(want, rel=0.02)


class TestRollingBacktest:
    def _iid_panel(self, rng, t, n):
        return make_panel(rng.normal(0.005, 0.03, (t, n)))

    def test_equal_weight_designated_share(self):
        rng = np.random.default_rng(21)
        panel = self._iid_panel(rng, 30, 4)
        summary = rolling_backtest(
            panel, 0.95, [StrategyConstraint.equal_weight()], 12, "A0")
        row = next(r for r in summary.rows if r.universe == "with")
        assert row.avg_designated_weight == pytest.approx(0.25, abs=1e-15)
        without = next(r for r in summary.rows if r.universe == "without")
        assert without.avg_designated_weight is None

    def test_window_of_t_minus_one_gives_single_rebalance(self):
        rng = np.random.default_rng(22)
        panel = self._iid_panel(rng, 14, 3)
        summary = rolling_backtest(
            panel, 0.95, [StrategyConstraint.equal_weight()], 13, "A0")
        with_rows = [d for d in summary.details if d.universe == "with"]
        assert len(with_rows) == 1
        row = next(r for r in summary.rows if r.universe == "with")
        assert row.n_dates == 1
        assert row.avg_return == pytest.approx(with_rows[0].realized_return, abs=1e-15)

    def test_realized_return_is_next_month(self):
        rng = np.random.default_rng(23)
        panel = self._iid_panel(rng, 14, 3)
        summary = rolling_backtest(
            panel, 0.95, [StrategyConstraint.equal_weight()], 13, "A0")
        detail = [d for d in summary.details if d.universe == "with"][0]
        assert detail.date == panel.dates[12]
        want = panel.values[13].mean()
        assert detail.realized_return == pytest.approx(want, abs=1e-12)

    def test_window_too_long(self):
        rng = np.random.default_rng(24)
        panel = self._iid_panel(rng, 12, 3)
        with pytest.raises(DataError):
            rolling_backtest(panel, 0.95, [StrategyConstraint.equal_weight()], 12, "A0")

    def test_missing_designated_asset(self):
        rng = np.random.default_rng(25)
        panel = self._iid_panel(rng, 20, 3)
        with pytest.raises(DataError):
            rolling_backtest(panel, 0.95, [StrategyConstraint.equal_weight()], 12, "ZZZ")

    def test_summary_row_count(self):
        rng = np.random.default_rng(26)
        panel = self._iid_panel(rng, 20, 4)
        strategies = [StrategyConstraint.long_only(), StrategyConstraint.equal_weight()]
        summary = rolling_backtest(panel, 0.95, strategies, 12, "A0")
        assert len(summary.rows) == 4  # 2 strategies x 2 universes
        assert {(r.strategy, r.universe) for r in summary.rows} == {
            ("long_only", "with"), ("long_only", "without"),
            ("equal_weight", "with"), ("equal_weight", "without"),
        }

    def test_ratio_definition(self):
        rng = np.random.default_rng(27)
        panel = self._iid_panel(rng, 24, 4)
        summary = rolling_backtest(
            panel, 0.95, [StrategyConstraint.equal_weight()], 12, "A0")
        for row in summary.rows:
            if row.avg_cvar > 0:
                assert row.risk_return_ratio == pytest.approx(
                    row.avg_return / row.avg_cvar, abs=1e-12)
            else:
                assert row.risk_return_ratio is None
