import math

import numpy as np
import pytest

from portopt.data import ReturnPanel
from portopt.errors import ConfigError
from portopt.meanvar import efficient_weights
from portopt.regime import (
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

from oracles import enumerate_smoother


def two_state_model(mu=(-1.0, 1.0), sigma=(1.0, 1.0), diag=0.9, pi=(0.5, 0.5)):
    k = len(mu)
    trans = np.full((k, k), (1 - diag) / (k - 1))
    np.fill_diagonal(trans, diag)
    return MsModel(
        intercepts=np.asarray(mu, dtype=float)[:, None],
        ar_coeffs=np.zeros((k, 0, 1, 1)),
        covariances=np.asarray([[[s**2]] for s in sigma]),
        transition=trans,
        initial_probs=np.asarray(pi, dtype=float),
    )


def random_model(rng, k, d=1):
    mu = rng.normal(0, 2, (k, d))
    covs = []
    for _ in range(k):
        m = rng.standard_normal((d, d))
        covs.append(m @ m.T + np.eye(d))
    trans = rng.uniform(0.2, 1.0, (k, k))
    trans /= trans.sum(axis=1, keepdims=True)
    pi = rng.uniform(0.1, 1.0, k)
    pi /= pi.sum()
    return MsModel(mu, np.zeros((k, 0, d, d)), np.stack(covs), trans, pi)


class TestModelValidation:
    def test_rows_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            MsModel([[0.0]], np.zeros((1, 0, 1, 1)), [[[1.0]]], [[0.5]], [1.0])

    def test_cov_must_be_spd(self):
        with pytest.raises(ConfigError):
            MsModel([[0.0]], np.zeros((1, 0, 1, 1)), [[[-1.0]]], [[1.0]], [1.0])

    def test_stationary_distribution(self):
        pi = stationary_distribution([[0.9, 0.1], [0.3, 0.7]])
        assert pi == pytest.approx([0.75, 0.25], abs=1e-10)


class TestSimulate:
    def test_single_state_iid(self):
        model = MsModel([[0.0]], np.zeros((1, 0, 1, 1)), [[[1.0]]], [[1.0]], [1.0])
        panel, states = simulate(model, 10000, seed=1)
        assert np.all(states == 0)
        assert abs(panel.values.mean()) < 4 / math.sqrt(10000)

    def test_absorbing_start(self):
        model = two_state_model(diag=1.0, pi=(1.0, 0.0))
        _, states = simulate(model, 50, seed=2)
        assert np.all(states == 0)

    def test_symmetric_chain_occupancy(self):
        model = two_state_model()
        _, states = simulate(model, 50_000, seed=3)
        assert abs((states == 0).mean() - 0.5) < 0.01

    def test_deterministic_given_seed(self):
        model = two_state_model()
        p1, s1 = simulate(model, 100, seed=4)
        p2, s2 = simulate(model, 100, seed=4)
        assert np.array_equal(p1.values, p2.values)
        assert np.array_equal(s1, s2)

    def test_ar_lags_enter(self):
        model = MsModel(
            intercepts=[[1.0]],
            ar_coeffs=[[[[0.5]]]],
            covariances=[[[1e-12]]],
            transition=[[1.0]],
            initial_probs=[1.0],
        )
        panel, _ = simulate(model, 6, seed=5)
        x = panel.values[:, 0]
        # x_t = 1 + 0.5 x_{t-1}, noise-free
        assert x[0] == pytest.approx(1.0, abs=1e-5)
        for t in range(1, 6):
            assert x[t] == pytest.approx(1.0 + 0.5 * x[t - 1], abs=1e-5)


class TestHamiltonFilter:
    def test_single_state_probabilities(self):
        model = MsModel([[0.0]], np.zeros((1, 0, 1, 1)), [[[1.0]]], [[1.0]], [1.0])
        panel, _ = simulate(model, 50, seed=6)
        out = hamilton_filter(model, panel)
        assert np.all(out.filtered == 1.0)
        assert np.isfinite(out.log_likelihood)

    def test_identical_states_keep_stationary(self):
        trans = np.array([[0.8, 0.2], [0.4, 0.6]])
        pi = stationary_distribution(trans)
        model = MsModel([[0.3], [0.3]], np.zeros((2, 0, 1, 1)),
                        [[[1.0]], [[1.0]]], trans, pi)
        panel, _ = simulate(model, 60, seed=7)
        out = hamilton_filter(model, panel)
        assert np.abs(out.filtered - pi).max() < 1e-12
        assert np.abs(out.predicted - pi).max() < 1e-12

    def test_well_separated_states_recovered(self):
        model = two_state_model(mu=(-5.0, 5.0))
        panel, states = simulate(model, 500, seed=8)
        out = hamilton_filter(model, panel)
        hit = (np.argmax(out.filtered, axis=1) == states).mean()
        assert hit >= 0.99

    def test_rows_are_distributions(self):
        rng = np.random.default_rng(9)
        model = random_model(rng, 3, 2)
        panel, _ = simulate(model, 200, seed=10)
        out = hamilton_filter(model, panel)
        for arr in (out.filtered, out.predicted):
            assert np.abs(arr.sum(axis=1) - 1.0).max() <= 1e-10
            assert arr.min() >= 0.0 and arr.max() <= 1.0

    def test_likelihood_matches_direct_mixture(self):
        # T=2, k=2: likelihood enumerable by hand.
        model = two_state_model(mu=(-1.0, 2.0), sigma=(1.0, 0.5), pi=(0.3, 0.7))
        panel = ReturnPanel(["x1"], ["2020-01", "2020-02"],
                            np.array([[0.2], [-0.4]]), "simulated")
        out = hamilton_filter(model, panel)
        from scipy.stats import norm
        d = norm.pdf([[0.2], [-0.4]], loc=[-1.0, 2.0], scale=[1.0, 0.5])
        pi = np.array([0.3, 0.7])
        p1 = pi * d[0]
        f1 = p1 / p1.sum()
        p2 = (f1 @ model.transition) * d[1]
        want = math.log(p1.sum()) + math.log(p2.sum())
        assert out.log_likelihood == pytest.approx(want, abs=1e-10)


class TestKimSmooth:
    def test_single_state(self):
        model = MsModel([[0.0]], np.zeros((1, 0, 1, 1)), [[[1.0]]], [[1.0]], [1.0])
        panel, _ = simulate(model, 20, seed=11)
        out = kim_smooth(model, hamilton_filter(model, panel))
        assert np.all(out.smoothed == 1.0)

    def test_terminal_condition(self):
        model = two_state_model()
        panel, _ = simulate(model, 40, seed=12)
        out = kim_smooth(model, hamilton_filter(model, panel))
        assert np.array_equal(out.smoothed[-1], out.filtered[-1])

    def test_matches_path_enumeration_small(self):
        from portopt.regime import _log_densities

        rng = np.random.default_rng(13)
        for trial in range(8):
            k = int(rng.integers(2, 4))
            t_eff = int(rng.integers(2, 6))
            model = random_model(rng, k)
            panel, _ = simulate(model, t_eff, seed=100 + trial)
            out = kim_smooth(model, hamilton_filter(model, panel))
            want = enumerate_smoother(
                model.initial_probs, model.transition,
                _log_densities(model, panel.values))
            assert np.abs(out.smoothed - want).max() < 1e-10


class TestEmFit:
    def test_k1_closed_form(self):
        rng = np.random.default_rng(14)
        values = rng.normal(0.01, 0.05, (60, 2))
        panel = ReturnPanel(["a", "b"],
                            [f"20{i // 12 + 10:02d}-{i % 12 + 1:02d}" for i in range(60)],
                            values, "simulated")
        fit = em_fit(panel, 1, 0, n_starts=1, seed=0)
        assert fit.model.intercepts[0] == pytest.approx(values.mean(axis=0), abs=1e-12)
        centered = values - values.mean(axis=0)
        ml_cov = centered.T @ centered / 60
        assert fit.model.covariances[0] == pytest.approx(ml_cov, abs=1e-8)
        assert fit.converged and fit.iterations <= 3

    def test_monotone_loglik(self):
        model = two_state_model()
        panel, _ = simulate(model, 600, seed=15)
        fit = em_fit(panel, 2, 0, n_starts=2, seed=16)
        deltas = np.diff(fit.trace)
        assert deltas.min() >= -1e-10

    def test_recovery_single_seed(self):
        model = two_state_model()
        panel, _ = simulate(model, 2000, seed=17)
        fit = em_fit(panel, 2, 0, n_starts=2, seed=18)
        assert fit.model.intercepts[0, 0] == pytest.approx(-1.0, abs=0.15)
        assert fit.model.intercepts[1, 0] == pytest.approx(1.0, abs=0.15)
        assert fit.model.transition[0, 0] == pytest.approx(0.9, abs=0.05)
        assert fit.model.transition[1, 1] == pytest.approx(0.9, abs=0.05)

    def test_states_ordered_by_first_intercept(self):
        model = two_state_model(mu=(2.0, -2.0))  # deliberately reversed
        panel, _ = simulate(model, 800, seed=19)
        fit = em_fit(panel, 2, 0, n_starts=2, seed=20)
        assert fit.model.intercepts[0, 0] <= fit.model.intercepts[1, 0]

    def test_transition_rows_stochastic(self):
        model = two_state_model()
        panel, _ = simulate(model, 500, seed=21)
        fit = em_fit(panel, 2, 0, n_starts=2, seed=22)
        assert np.abs(fit.model.transition.sum(axis=1) - 1.0).max() <= 1e-12

    def test_advisory_minimum_warns(self):
        model = two_state_model()
        panel, _ = simulate(model, 15, seed=23)  # below 10*k*d = 20
        with pytest.warns(UserWarning, match="advisory minimum"):
            em_fit(panel, 2, 0, n_starts=1, max_iterations=20, seed=24)

    def test_ar_order_smoke(self):
        model = MsModel(
            intercepts=[[0.5], [-0.5]],
            ar_coeffs=[[[[0.4]]], [[[0.1]]]],
            covariances=[[[0.5]], [[0.5]]],
            transition=[[0.95, 0.05], [0.05, 0.95]],
            initial_probs=[0.5, 0.5],
        )
        panel, _ = simulate(model, 800, seed=25)
        fit = em_fit(panel, 2, 1, n_starts=2, seed=26)
        assert fit.model.order == 1
        assert np.diff(fit.trace).min() >= -1e-10
        assert fit.model.ar_coeffs.shape == (2, 1, 1, 1)

    def test_three_state_recovery_smoke(self):
        model = MsModel(
            intercepts=[[-4.0], [0.0], [4.0]],
            ar_coeffs=np.zeros((3, 0, 1, 1)),
            covariances=[[[1.0]], [[1.0]], [[1.0]]],
            transition=[[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]],
            initial_probs=[1 / 3] * 3,
        )
        panel, _ = simulate(model, 1500, seed=29)
        fit = em_fit(panel, 3, 0, n_starts=3, seed=30)
        assert np.diff(fit.trace).min() >= -1e-10
        means = fit.model.intercepts[:, 0]
        assert means[0] == pytest.approx(-4.0, abs=0.3)
        assert means[1] == pytest.approx(0.0, abs=0.3)
        assert means[2] == pytest.approx(4.0, abs=0.3)

    def test_aic_bic_present(self):
        model = two_state_model()
        panel, _ = simulate(model, 400, seed=27)
        fit = em_fit(panel, 2, 0, n_starts=1, seed=28)
        assert fit.aic == pytest.approx(2 * fit.n_parameters - 2 * fit.log_likelihood)
        assert fit.bic == pytest.approx(
            fit.n_parameters * math.log(len(fit.dates)) - 2 * fit.log_likelihood)


class TestRegimeConditionalWeights:
    def _fit_for(self, model, ids):
        return FitReport(model=model, asset_ids=ids, dates=["2020-01"],
                         iterations=1, log_likelihood=0.0)

    def test_identical_states_identical_weights(self):
        cov = np.array([[0.04, 0.01], [0.01, 0.09]])
        model = MsModel([[0.1, 0.2], [0.1, 0.2]], np.zeros((2, 0, 2, 2)),
                        [cov, cov], [[0.9, 0.1], [0.1, 0.9]], [0.5, 0.5])
        fit = self._fit_for(model, ["a", "b"])
        w = regime_conditional_weights(fit, "meanvar")
        assert w[0].weights == pytest.approx(w[1].weights, abs=1e-12)

    def test_raised_mean_raises_state_weight(self):
        cov = np.array([[0.04, 0.01], [0.01, 0.09]])
        model = MsModel([[0.05, 0.10], [0.09, 0.10]], np.zeros((2, 0, 2, 2)),
                        [cov, cov], [[0.9, 0.1], [0.1, 0.9]], [0.5, 0.5])
        fit = self._fit_for(model, ["a", "b"])
        w = regime_conditional_weights(fit, "meanvar", target_mean=0.095)
        # closed-form check for the bull state
        bull = efficient_weights([0.09, 0.10], cov, 0.095).weights.weights
        assert w[1].weights == pytest.approx(bull, abs=1e-10)
        assert w[1].weights[0] > w[0].weights[0]

    def test_k1_matches_unconditional(self):
        cov = np.array([[0.04, 0.01], [0.01, 0.09]])
        model = MsModel([[0.1, 0.2]], np.zeros((1, 0, 2, 2)), [cov],
                        [[1.0]], [1.0])
        fit = self._fit_for(model, ["a", "b"])
        from portopt.meanvar import gmv_weights
        w = regime_conditional_weights(fit, "meanvar")
        assert w[0].weights == pytest.approx(gmv_weights(cov).weights, abs=1e-12)

    def test_cvar_method(self):
        cov = np.array([[0.04, 0.0], [0.0, 0.09]])
        model = MsModel([[0.10, -0.5], [0.10, -0.5]], np.zeros((2, 0, 2, 2)),
                        [cov, cov], [[0.9, 0.1], [0.1, 0.9]], [0.5, 0.5])
        fit = self._fit_for(model, ["good", "bad"])
        w = regime_conditional_weights(fit, "cvar", n_scenarios=500, seed=5)
        for state_w in w:
            assert state_w.weights[0] > 0.9  # the dominated asset is shunned

    def test_requires_lag_free_fit(self):
        model = MsModel([[0.0]], np.zeros((1, 1, 1, 1)), [[[1.0]]], [[1.0]], [1.0])
        fit = self._fit_for(model, ["a"])
        with pytest.raises(ConfigError):
            regime_conditional_weights(fit, "meanvar")


class TestSdf:
    def test_unit_growth(self):
        p = SdfParams(0.96, 5.0, [1.0], [0.01])
        assert sdf_value(p, 1.0) == 0.96

    def test_log_utility_value(self):
        p = SdfParams(0.96, 1.0, [1.0], [0.01])
        assert sdf_value(p, 1.02) == pytest.approx(0.9411764706, abs=1e-9)
        assert sdf_value(p, 1.02) == pytest.approx(0.96 / 1.02, abs=1e-12)

    def test_zero_risk_aversion_limit(self):
        # gamma must be positive; approach the risk-neutral limit instead
        p = SdfParams(0.9, 1e-12, [1.0], [0.01])
        for g in (0.5, 1.0, 2.0):
            assert sdf_value(p, g) == pytest.approx(0.9, abs=1e-9)

    def test_nonpositive_growth_rejected(self):
        p = SdfParams(0.96, 2.0, [1.0], [0.01])
        with pytest.raises(ValueError):
            sdf_value(p, 0.0)

    def test_sample_growth_shape_and_determinism(self):
        p = SdfParams(0.96, 2.0, [1.0, 1.01], [0.01, 0.02])
        a = sample_growth(p, 100, seed=3)
        b = sample_growth(p, 100, seed=3)
        assert a.shape == (2, 100)
        assert np.array_equal(a, b)


class TestRegimeRiskPremium:
    def _params(self):
        return SdfParams(0.95, 2.0, [1.0, 1.01], [0.01, 0.02])

    def test_zero_covariance_zero_premium(self):
        p = self._params()
        growth = [np.array([1.0, 1.0, 1.0, 1.0]), np.array([1.01, 1.01, 1.01, 1.01])]
        excess = [np.array([0.01, -0.02, 0.03, 0.0]), np.array([0.0, 0.01, -0.01, 0.02])]
        assert regime_risk_premium(p, [0.6, 0.4], growth, excess) == pytest.approx(0.0, abs=1e-15)

    def test_single_state_collapse(self):
        p = self._params()
        rng = np.random.default_rng(30)
        g = 1.0 + rng.normal(0.002, 0.01, 50)
        x = rng.normal(0.01, 0.05, 50)
        got = regime_risk_premium(p, [1.0], [g], [x])
        m = sdf_value(p, g)
        want = -float((m - m.mean()) @ (x - x.mean())) / 49 / m.mean()
        assert got == pytest.approx(want, abs=1e-14)

    def test_two_state_hand_mixture(self):
        p = self._params()
        growth = [np.array([1.00, 1.02, 0.98, 1.01]),
                  np.array([0.99, 1.03, 1.00, 1.02])]
        excess = [np.array([0.01, 0.03, -0.02, 0.02]),
                  np.array([-0.01, 0.04, 0.00, 0.02])]
        pi = [0.6, 0.4]
        num = 0.0
        den = 0.0
        for s in range(2):
            m = [0.95 * g ** (-2.0) for g in growth[s]]
            mb = sum(m) / 4
            xb = sum(excess[s]) / 4
            cov = sum((mi - mb) * (xi - xb) for mi, xi in zip(m, excess[s])) / 3
            num += pi[s] * cov
            den += pi[s] * mb
        want = -num / den
        got = regime_risk_premium(p, pi, growth, excess)
        assert got == pytest.approx(want, abs=1e-14)

    def test_probability_vector_validated(self):
        p = self._params()
        with pytest.raises(ConfigError):
            regime_risk_premium(p, [0.7, 0.7], [np.ones(3)] * 2, [np.zeros(3)] * 2)
