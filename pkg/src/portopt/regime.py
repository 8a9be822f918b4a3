"""k-state Markov switching model for asset returns.

The model: observations follow a Gaussian VAR whose intercepts, lag
matrices and covariance all switch with a latent first-order Markov state.
Forward filtering gives per-date state probabilities and the likelihood;
a backward pass turns them into full-sample (smoothed) probabilities; EM
alternates those expectations with weighted least squares and transition
counting. Per-state allocation and the consumption-based discount-factor
pricing identities are built on top as separate, composable pieces.

Filtering runs in scaled probability space with the per-step normalizers
accumulated in log space: sample sizes in the hundreds underflow naive
density products long before they stress anything else here.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import ReturnPanel, month_range
from .errors import ConfigError, ConvergenceError, DataError, NotPositiveDefiniteError
from .meanvar import WeightVector, efficient_weights, gmv_weights
from .numerics import cholesky_factor, mvn_logpdf, spd_factor_solve

_PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class MsModel:
    """Parameters of a k-state Gaussian (optionally VAR) switching model.

    ``intercepts`` is (k, d); ``ar_coeffs`` is (k, p, d, d) with p possibly
    zero; ``covariances`` is (k, d, d); ``transition`` is row-stochastic
    (k, k) with entry [i, j] the probability of moving from state i to
    state j; ``initial_probs`` is the state distribution for the first
    usable observation.
    """

    intercepts: np.ndarray
    ar_coeffs: np.ndarray
    covariances: np.ndarray
    transition: np.ndarray
    initial_probs: np.ndarray

    def __post_init__(self):
        for name in ("intercepts", "ar_coeffs", "covariances", "transition",
                     "initial_probs"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        k, d = self.intercepts.shape
        if self.ar_coeffs.ndim != 4 or self.ar_coeffs.shape[0] != k \
                or self.ar_coeffs.shape[2:] != (d, d):
            raise ConfigError("ar_coeffs must have shape (k, p, d, d)")
        if self.covariances.shape != (k, d, d):
            raise ConfigError("covariances must have shape (k, d, d)")
        if self.transition.shape != (k, k):
            raise ConfigError("transition must have shape (k, k)")
        if np.any(self.transition < 0) or np.any(self.transition > 1):
            raise ConfigError("transition entries must lie in [0, 1]")
        if np.abs(self.transition.sum(axis=1) - 1.0).max() > 1e-12:
            raise ConfigError("transition rows must sum to 1")
        if self.initial_probs.shape != (k,) or np.any(self.initial_probs < 0) \
                or abs(float(self.initial_probs.sum()) - 1.0) > 1e-10:
            raise ConfigError("initial_probs must be a probability vector")
        for s in range(k):
            try:
                cholesky_factor(self.covariances[s])
            except NotPositiveDefiniteError as exc:
                raise ConfigError(f"covariance of state {s} is not SPD") from exc

    @property
    def n_states(self) -> int:
        return self.intercepts.shape[0]

    @property
    def n_dims(self) -> int:
        return self.intercepts.shape[1]

    @property
    def order(self) -> int:
        return self.ar_coeffs.shape[1]

    def n_parameters(self) -> int:
        k, d, p = self.n_states, self.n_dims, self.order
        return k * d + k * p * d * d + k * d * (d + 1) // 2 + k * (k - 1) + (k - 1)


@dataclass(frozen=True)
class FilterOutput:
    """State probabilities per usable date plus the model log-likelihood."""

    dates: list[str]
    filtered: np.ndarray
    predicted: np.ndarray
    log_likelihood: float
    smoothed: np.ndarray | None = None


@dataclass(frozen=True)
class FitReport:
    """Outcome of an EM fit; states are relabelled with the lowest
    first-asset intercept first."""

    model: MsModel
    asset_ids: list[str]
    dates: list[str]
    iterations: int
    log_likelihood: float
    trace: list[float] = field(repr=False, default_factory=list)
    converged: bool = True
    covariance_repaired: bool = False

    @property
    def n_parameters(self) -> int:
        return self.model.n_parameters()

    @property
    def aic(self) -> float:
        return 2.0 * self.n_parameters - 2.0 * self.log_likelihood

    @property
    def bic(self) -> float:
        return self.n_parameters * math.log(len(self.dates)) - 2.0 * self.log_likelihood


def stationary_distribution(transition) -> np.ndarray:
    """Ergodic distribution pi with pi' P = pi', solved as a least-squares
    system (no eigen machinery needed at this size)."""
    p = np.asarray(transition, dtype=float)
    k = p.shape[0]
    a = np.vstack([p.T - np.eye(k), np.ones((1, k))])
    b = np.concatenate([np.zeros(k), [1.0]])
    pi = spd_factor_solve(a.T @ a, a.T @ b)
    pi = np.maximum(pi, 0.0)
    return pi / pi.sum()


def _design(values: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    t = values.shape[0]
    y = values[p:]
    cols = [np.ones((t - p, 1))]
    for j in range(1, p + 1):
        cols.append(values[p - j : t - j])
    return np.hstack(cols), y


def _log_densities(model: MsModel, values: np.ndarray) -> np.ndarray:
    """(T_eff, k) log emission densities."""
    p = model.order
    x, y = _design(values, p)
    k, d = model.n_states, model.n_dims
    out = np.empty((y.shape[0], k))
    zero = np.zeros(d)
    for s in range(k):
        beta = np.vstack(
            [model.intercepts[s][None, :]]
            + [model.ar_coeffs[s, j].T for j in range(p)]
        )
        resid = y - x @ beta
        out[:, s] = mvn_logpdf(resid, zero, model.covariances[s])
    return out


def _filter_smooth(model: MsModel, log_dens: np.ndarray, smooth: bool):
    """Scaled forward recursion and optional backward pass.

    Runs over plain Python lists: the recursion is inherently sequential
    and per-step numpy dispatch dominates at these state counts.
    """
    t_eff, k = log_dens.shape
    shift = log_dens.max(axis=1)
    emis = np.exp(log_dens - shift[:, None]).tolist()
    trans = model.transition.tolist()
    rng_k = range(k)

    pred = [float(v) for v in model.initial_probs]
    filtered: list[list[float]] = []
    predicted: list[list[float]] = []
    loglik = 0.0
    for t in range(t_eff):
        et = emis[t]
        w = [pred[j] * et[j] for j in rng_k]
        total = sum(w)
        if total <= 0.0 or not math.isfinite(total):
            raise ConvergenceError(
                f"filter likelihood vanished at step {t}; data and model are "
                "irreconcilable at working precision"
            )
        filt = [wj / total for wj in w]
        predicted.append(pred)
        filtered.append(filt)
        loglik += shift[t] + math.log(total)
        pred = [
            sum(filt[i] * trans[i][j] for i in rng_k) for j in rng_k
        ]

    smoothed = None
    if smooth:
        smoothed = [None] * t_eff
        smoothed[-1] = list(filtered[-1])
        for t in range(t_eff - 2, -1, -1):
            nxt, prd, flt = smoothed[t + 1], predicted[t + 1], filtered[t]
            ratio = [nxt[j] / max(prd[j], _PROB_FLOOR) for j in rng_k]
            smoothed[t] = [
                flt[i] * sum(trans[i][j] * ratio[j] for j in rng_k)
                for i in rng_k
            ]
    return (
        np.asarray(filtered),
        np.asarray(predicted),
        float(loglik),
        None if smoothed is None else np.asarray(smoothed),
    )


def hamilton_filter(model: MsModel, panel: ReturnPanel) -> FilterOutput:
    """Forward state-probability recursion over the panel.

    Rows of ``filtered``/``predicted`` are the state distributions given
    data up to and before each usable date; the log-likelihood accumulates
    the per-step normalizers.
    """
    if panel.n_assets != model.n_dims:
        raise DataError(
            f"panel has {panel.n_assets} columns, model expects {model.n_dims}"
        )
    if panel.n_periods <= model.order:
        raise DataError("panel shorter than the autoregressive order")
    log_dens = _log_densities(model, panel.values)
    filt, pred, loglik, _ = _filter_smooth(model, log_dens, smooth=False)
    return FilterOutput(list(panel.dates[model.order :]), filt, pred, loglik)


def kim_smooth(model: MsModel, filter_output: FilterOutput) -> FilterOutput:
    """Backward pass producing full-sample state probabilities.

    The last smoothed row equals the last filtered row exactly; earlier
    rows fold in the future through the transition matrix, with predicted
    probabilities floored to keep the division defined.
    """
    filt = filter_output.filtered
    pred = filter_output.predicted
    t_eff, k = filt.shape
    if k != model.n_states:
        raise ConfigError("filter output does not match the model's state count")
    trans = model.transition
    smoothed = np.empty_like(filt)
    smoothed[-1] = filt[-1]
    for t in range(t_eff - 2, -1, -1):
        ratio = smoothed[t + 1] / np.maximum(pred[t + 1], _PROB_FLOOR)
        smoothed[t] = filt[t] * (trans @ ratio)
    return replace(filter_output, smoothed=smoothed)


def simulate(model: MsModel, n_periods: int, seed: int,
             asset_ids: list[str] | None = None,
             start_month: str = "2000-01") -> tuple[ReturnPanel, np.ndarray]:
    """Draw a state path and observations from the model.

    Pre-sample lags are zero. Deterministic given the seed; the panel is
    tagged with the "simulated" convention so arbitrary real values pass
    validation.
    """
    if n_periods <= model.order:
        raise ConfigError("n_periods must exceed the autoregressive order")
    k, d, p = model.n_states, model.n_dims, model.order
    rng = np.random.default_rng(seed)
    cum_init = np.cumsum(model.initial_probs)
    cum_trans = np.cumsum(model.transition, axis=1)

    states = np.empty(n_periods, dtype=int)
    u = rng.random(n_periods)
    states[0] = int(np.searchsorted(cum_init, u[0], side="right"))
    for t in range(1, n_periods):
        states[t] = int(
            np.searchsorted(cum_trans[states[t - 1]], u[t], side="right")
        )
    states = np.minimum(states, k - 1)

    chols = [cholesky_factor(model.covariances[s]) for s in range(k)]
    z = rng.standard_normal((n_periods, d))
    values = np.empty((n_periods, d))
    if p == 0:
        for s in range(k):
            mask = states == s
            values[mask] = model.intercepts[s] + z[mask] @ chols[s].T
    else:
        for t in range(n_periods):
            s = states[t]
            mean = model.intercepts[s].copy()
            for j in range(1, p + 1):
                lag = values[t - j] if t - j >= 0 else np.zeros(d)
                mean += model.ar_coeffs[s, j - 1] @ lag
            values[t] = mean + chols[s] @ z[t]
    ids = asset_ids or [f"x{j + 1}" for j in range(d)]
    panel = ReturnPanel(ids, month_range(start_month, n_periods), values, "simulated")
    return panel, states


def _initial_params(values: np.ndarray, k: int, p: int, rng, deterministic: bool):
    t, d = values.shape
    sample_mean = values.mean(axis=0)
    sample_std = values.std(axis=0, ddof=0)
    centered = values - sample_mean
    ml_cov = centered.T @ centered / t
    ml_cov = ml_cov + 1e-10 * np.trace(ml_cov) / d * np.eye(d)

    if deterministic:
        order = np.argsort(values[:, 0], kind="stable")
        blocks = np.array_split(order, k)
        mu = np.vstack([values[idx].mean(axis=0) for idx in blocks])
        diag = 0.9
    else:
        rows = rng.integers(0, t, size=k)
        mu = values[rows] + 0.1 * sample_std * rng.standard_normal((k, d))
        diag = float(rng.uniform(0.7, 0.95))
    trans = np.full((k, k), (1.0 - diag) / (k - 1) if k > 1 else 0.0)
    np.fill_diagonal(trans, diag if k > 1 else 1.0)
    return MsModel(
        intercepts=mu,
        ar_coeffs=np.zeros((k, p, d, d)),
        covariances=np.stack([ml_cov] * k),
        transition=trans,
        initial_probs=np.full(k, 1.0 / k),
    )


def _wls(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    xw = x * w[:, None]
    gram = x.T @ xw
    rhs = xw.T @ y
    try:
        return spd_factor_solve(gram, rhs)
    except NotPositiveDefiniteError:
        bump = 1e-10 * max(float(np.trace(gram)), 1.0) / gram.shape[0]
        return spd_factor_solve(gram + bump * np.eye(gram.shape[0]), rhs)


def _m_step(model: MsModel, x, y, filt, pred, smoothed, var_floor):
    k, d, p = model.n_states, model.n_dims, model.order
    ratio = smoothed[1:] / np.maximum(pred[1:], _PROB_FLOOR)
    xi_sum = model.transition * (filt[:-1].T @ ratio)
    row_sums = xi_sum.sum(axis=1, keepdims=True)
    trans = np.where(row_sums > 0, xi_sum / np.maximum(row_sums, _PROB_FLOOR),
                     model.transition)
    trans = trans / trans.sum(axis=1, keepdims=True)

    intercepts = np.empty((k, d))
    ar = np.empty((k, p, d, d))
    covs = np.empty((k, d, d))
    repaired = False
    for s in range(k):
        w = smoothed[:, s]
        total = float(w.sum())
        if total < 1e-10:
            intercepts[s] = model.intercepts[s]
            ar[s] = model.ar_coeffs[s]
            covs[s] = model.covariances[s]
            repaired = True
            continue
        beta = _wls(x, y, w)
        intercepts[s] = beta[0]
        for j in range(p):
            ar[s, j] = beta[1 + j * d : 1 + (j + 1) * d].T
        resid = y - x @ beta
        cov = (resid * w[:, None]).T @ resid / total
        low_var = cov.diagonal() < var_floor
        if low_var.any():
            cov = cov.copy()
            idx = np.where(low_var)[0]
            cov[idx, idx] = var_floor[idx]
            repaired = True
        bump = 1e-10 * max(float(np.trace(cov)), 1e-30) / d
        for _ in range(12):
            try:
                cholesky_factor(cov)
                break
            except NotPositiveDefiniteError:
                cov = cov + bump * np.eye(d)
                bump *= 10.0
                repaired = True
        covs[s] = (cov + cov.T) / 2.0
    return MsModel(intercepts, ar, covs, trans, smoothed[0].copy()), repaired


def _relabel(model: MsModel) -> MsModel:
    perm = np.argsort(model.intercepts[:, 0], kind="stable")
    return MsModel(
        intercepts=model.intercepts[perm],
        ar_coeffs=model.ar_coeffs[perm],
        covariances=model.covariances[perm],
        transition=model.transition[np.ix_(perm, perm)],
        initial_probs=model.initial_probs[perm],
    )


def em_fit(panel: ReturnPanel, k: int, p: int = 0, *, n_starts: int = 8,
           max_iterations: int = 1000, tol: float = 1e-8,
           seed: int = 0) -> FitReport:
    """Fit a k-state model by EM with multiple restarts.

    The expectation step is the filter plus smoother; the maximization step
    is per-state weighted least squares, weighted residual covariances and
    smoothed transition counts. Iteration stops when the relative
    log-likelihood change drops below ``tol``. The first start is a
    deterministic quantile split of the data; the rest are random, and the
    best final likelihood wins. Covariance collapse is caught by a variance
    floor of 1e-8 times the sample variance and flagged on the report.
    """
    if k < 1:
        raise ConfigError("k must be at least 1")
    if p < 0:
        raise ConfigError("autoregressive order must be nonnegative")
    if panel.n_periods <= p:
        raise DataError("panel shorter than the autoregressive order")
    values = panel.values
    t, d = values.shape
    advisory = 10 * k * (d + p * d * d)
    if t < advisory:
        warnings.warn(
            f"sample of {t} observations is below the advisory minimum of "
            f"{advisory} for k={k}, p={p}; estimates may be fragile",
            stacklevel=2,
        )
    x, y = _design(values, p)
    centered = values - values.mean(axis=0)
    var_floor = 1e-8 * (centered * centered).mean(axis=0)

    seeds = np.random.SeedSequence(seed).spawn(max(n_starts, 1))
    n_runs = 1 if k == 1 else max(n_starts, 1)
    best: tuple[float, MsModel, list[float], bool, bool] | None = None
    failure: ConvergenceError | None = None
    for run in range(n_runs):
        rng = np.random.default_rng(seeds[run])
        model = _initial_params(values, k, p, rng, deterministic=(run == 0))
        trace: list[float] = []
        repaired_any = False
        converged = False
        previous = -np.inf
        try:
            for _ in range(max_iterations):
                log_dens = _log_densities(model, values)
                filt, pred, loglik, smoothed = _filter_smooth(
                    model, log_dens, smooth=True)
                trace.append(loglik)
                if abs(loglik - previous) < tol * (1.0 + abs(previous)):
                    converged = True
                    break
                previous = loglik
                model, repaired = _m_step(model, x, y, filt, pred, smoothed,
                                          var_floor)
                repaired_any = repaired_any or repaired
            else:
                # The cap was hit right after an M-step: score the final
                # model so the report pairs the model with its likelihood.
                log_dens = _log_densities(model, values)
                _, _, loglik, _ = _filter_smooth(model, log_dens, smooth=False)
                trace.append(loglik)
        except ConvergenceError as exc:
            # A diverged restart is discarded; another start may succeed.
            failure = exc
            continue
        candidate = (trace[-1], model, trace, converged, repaired_any)
        if best is None or candidate[0] > best[0]:
            best = candidate

    if best is None:
        raise ConvergenceError(
            "every EM start diverged numerically"
        ) from failure
    loglik, model, trace, converged, repaired_any = best
    # The non-converged path appends one extra scoring pass to the trace.
    n_cycles = len(trace) if converged else len(trace) - 1
    return FitReport(
        model=_relabel(model),
        asset_ids=list(panel.asset_ids),
        dates=list(panel.dates[p:]),
        iterations=n_cycles,
        log_likelihood=loglik,
        trace=trace,
        converged=converged,
        covariance_repaired=repaired_any,
    )


def regime_conditional_weights(fit: FitReport, method: str = "meanvar", *,
                               target_mean: float | None = None,
                               alpha: float = 0.95,
                               strategy=None,
                               n_scenarios: int = 2000,
                               seed: int = 0) -> list[WeightVector]:
    """One allocation per state from the state-conditional distribution.

    ``meanvar`` uses the state's mean/covariance in the closed forms (the
    global minimum-variance portfolio, or the mean-targeted solution when
    ``target_mean`` is given). ``cvar`` draws Gaussian scenario sets from
    each state and delegates to the CVaR program. Requires a lag-free fit.
    """
    from .cvar import ScenarioMatrix, StrategyConstraint, minimize_cvar

    model = fit.model
    if model.order != 0:
        raise ConfigError("state-conditional weights require a fit with p=0")
    if method not in ("meanvar", "cvar"):
        raise ConfigError(f"unknown method: {method}")
    out: list[WeightVector] = []
    seeds = np.random.SeedSequence(seed).spawn(model.n_states)
    for s in range(model.n_states):
        if method == "meanvar":
            if target_mean is None:
                out.append(
                    gmv_weights(model.covariances[s], asset_ids=fit.asset_ids)
                )
            else:
                point = efficient_weights(
                    model.intercepts[s], model.covariances[s], target_mean,
                    asset_ids=fit.asset_ids,
                )
                out.append(point.weights)
        else:
            rng = np.random.default_rng(seeds[s])
            low = cholesky_factor(model.covariances[s])
            draws = model.intercepts[s] + rng.standard_normal(
                (n_scenarios, model.n_dims)
            ) @ low.T
            sc = ScenarioMatrix(
                list(fit.asset_ids), draws, np.full(n_scenarios, 1.0 / n_scenarios)
            )
            report = minimize_cvar(
                sc, alpha, target_mean, strategy or StrategyConstraint.long_only()
            )
            out.append(report.weights)
    return out


# ---------------------------------------------------------------------------
# Stochastic discount factor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SdfParams:
    """Power-utility pricing inputs with per-state consumption growth."""

    discount_factor: float
    risk_aversion: float
    growth_means: np.ndarray
    growth_stds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "growth_means", np.asarray(self.growth_means, dtype=float))
        object.__setattr__(self, "growth_stds", np.asarray(self.growth_stds, dtype=float))
        if not 0.0 < self.discount_factor <= 1.0:
            raise ConfigError("discount factor must lie in (0, 1]")
        if self.risk_aversion <= 0.0:
            raise ConfigError("risk aversion must be positive")
        if self.growth_means.shape != self.growth_stds.shape:
            raise ConfigError("growth means and stds must align")
        if np.any(self.growth_stds <= 0.0):
            raise ConfigError("growth stds must be positive")

    @property
    def n_states(self) -> int:
        return self.growth_means.size


def sdf_value(params: SdfParams, growth):
    """Stochastic discount factor for gross consumption growth:
    discount * growth ** (-risk_aversion). Accepts scalars or arrays."""
    g = np.asarray(growth, dtype=float)
    if np.any(g <= 0.0):
        raise ValueError("gross consumption growth must be positive")
    m = params.discount_factor * g ** (-params.risk_aversion)
    return float(m) if np.ndim(growth) == 0 else m


def sample_growth(params: SdfParams, n: int, seed: int) -> np.ndarray:
    """Draw (k, n) Gaussian consumption-growth samples, one row per state."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((params.n_states, n))
    return params.growth_means[:, None] + params.growth_stds[:, None] * z


def regime_risk_premium(params: SdfParams, state_probs,
                        growth_draws: Sequence[np.ndarray],
                        excess_draws: Sequence[np.ndarray]) -> float:
    """Expected excess return implied by the state-mixture pricing identity.

    Per-state joint samples of consumption growth and excess return enter
    as minus the probability-mixed within-state covariance of the discount
    factor with the excess return, divided by the probability-mixed
    within-state mean of the discount factor. Sample moments use the n-1
    convention. A nonpositive denominator signals invalid inputs.
    """
    pi = np.asarray(state_probs, dtype=float)
    if np.any(pi < 0) or abs(float(pi.sum()) - 1.0) > 1e-10:
        raise ConfigError("state probabilities must form a probability vector")
    if len(growth_draws) != pi.size or len(excess_draws) != pi.size:
        raise ConfigError("one sample pair per state is required")
    num = 0.0
    den = 0.0
    for s in range(pi.size):
        g = np.asarray(growth_draws[s], dtype=float)
        x = np.asarray(excess_draws[s], dtype=float)
        if g.size != x.size or g.size < 2:
            raise ConfigError(f"state {s}: joint samples need length >= 2")
        m = sdf_value(params, g)
        cov = float((m - m.mean()) @ (x - x.mean())) / (g.size - 1)
        num += pi[s] * cov
        den += pi[s] * float(m.mean())
    if den <= 0.0:
        raise ValueError("nonpositive expected discount factor")
    return -num / den
