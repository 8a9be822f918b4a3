"""Closed-form minimum-variance frontier.

The frontier for the program min w'Sw subject to w'e = target and w'1 = 1
is characterized by three quadratic forms of the inverse covariance; the
optimal weights follow from the two Lagrange multipliers. The global
minimum-variance portfolio (no mean target) is S^{-1}1 / (1'S^{-1}1).
Everything is computed via SPD solves, never an explicit inverse, and
short positions are legitimate outputs: weight constraints belong to the
LP-based optimizer, not here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFrontierError, NotPositiveDefiniteError
from .numerics import SymMatrix, spd_factor_solve

_RIDGE_EPS = 1e-8


@dataclass(frozen=True)
class WeightVector:
    """Portfolio allocation over a labelled asset universe; sums to one."""

    asset_ids: list[str]
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if len(self.asset_ids) != self.weights.size:
            raise ValueError("labels and weights differ in length")
        total = float(self.weights.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {total}, not 1")

    def as_dict(self) -> dict[str, float]:
        return {a: float(w) for a, w in zip(self.asset_ids, self.weights)}


@dataclass(frozen=True)
class FrontierCoefficients:
    """Efficient-set constants: the quadratic forms e'S^{-1}e, e'S^{-1}1
    and 1'S^{-1}1, plus their discriminant a*c - b*b."""

    a: float
    b: float
    c: float

    @property
    def d(self) -> float:
        return self.a * self.c - self.b * self.b

    @property
    def min_variance(self) -> float:
        return 1.0 / self.c

    @property
    def min_variance_mean(self) -> float:
        return self.b / self.c


@dataclass(frozen=True)
class FrontierPoint:
    target_mean: float
    variance: float
    std_dev: float
    weights: WeightVector


def _cov_values(cov) -> np.ndarray:
    if isinstance(cov, SymMatrix):
        return cov.values
    return SymMatrix.from_array(np.asarray(cov, dtype=float)).values


def _solve_pair(means: np.ndarray, cov, ridge: bool):
    """Solve S x = [means, 1] with optional one-shot ridge repair."""
    values = _cov_values(cov)
    rhs = np.column_stack([means, np.ones(means.size)])
    try:
        sol = spd_factor_solve(values, rhs)
    except NotPositiveDefiniteError:
        if not ridge:
            raise
        bump = _RIDGE_EPS * float(np.trace(values)) / values.shape[0]
        values = values + bump * np.eye(values.shape[0])
        sol = spd_factor_solve(values, rhs)
    return sol[:, 0], sol[:, 1], values


def frontier_coefficients(means, cov, *, ridge: bool = False) -> FrontierCoefficients:
    """Efficient-set constants from a mean vector and covariance.

    ``ridge`` opts into a single diagonal bump of 1e-8 * trace/n when the
    covariance is not positive definite; the default is a hard error so that
    silent regularization never distorts weights.
    """
    means = np.asarray(means, dtype=float)
    if means.size < 2:
        raise ValueError("at least two assets are required")
    sinv_e, sinv_1, _ = _solve_pair(means, cov, ridge)
    coef = FrontierCoefficients(
        a=float(means @ sinv_e), b=float(means @ sinv_1), c=float(sinv_1.sum())
    )
    if coef.d <= 1e-12 * abs(coef.a * coef.c):
        raise DegenerateFrontierError(
            "mean vector is proportional to ones; no frontier exists"
        )
    return coef


def frontier_variance(coef: FrontierCoefficients, target_mean: float) -> float:
    """Variance of the frontier portfolio with the given target mean."""
    if coef.d <= 0:
        raise DegenerateFrontierError("degenerate frontier coefficients")
    mu = target_mean
    return (coef.c * mu * mu - 2.0 * coef.b * mu + coef.a) / coef.d


def efficient_weights(means, cov, target_mean: float, *, ridge: bool = False,
                      asset_ids: list[str] | None = None) -> FrontierPoint:
    """Minimum-variance weights hitting the target mean exactly."""
    means = np.asarray(means, dtype=float)
    sinv_e, sinv_1, values = _solve_pair(means, cov, ridge)
    coef = FrontierCoefficients(
        a=float(means @ sinv_e), b=float(means @ sinv_1), c=float(sinv_1.sum())
    )
    if coef.d <= 1e-12 * abs(coef.a * coef.c):
        raise DegenerateFrontierError(
            "mean vector is proportional to ones; no frontier exists"
        )
    lam = (coef.c * target_mean - coef.b) / coef.d
    gam = (coef.a - coef.b * target_mean) / coef.d
    w = lam * sinv_e + gam * sinv_1
    variance = float(w @ values @ w)
    ids = asset_ids or [f"x{j + 1}" for j in range(means.size)]
    return FrontierPoint(
        target_mean=float(target_mean),
        variance=variance,
        std_dev=float(np.sqrt(max(variance, 0.0))),
        weights=WeightVector(ids, w),
    )


def gmv_weights(cov, *, ridge: bool = False,
                asset_ids: list[str] | None = None) -> WeightVector:
    """Global minimum-variance weights S^{-1}1 / (1'S^{-1}1)."""
    values = _cov_values(cov)
    ones = np.ones(values.shape[0])
    try:
        sinv_1 = spd_factor_solve(values, ones)
    except NotPositiveDefiniteError:
        if not ridge:
            raise
        bump = _RIDGE_EPS * float(np.trace(values)) / values.shape[0]
        sinv_1 = spd_factor_solve(values + bump * np.eye(values.shape[0]), ones)
    w = sinv_1 / sinv_1.sum()
    ids = asset_ids or [f"x{j + 1}" for j in range(values.shape[0])]
    return WeightVector(ids, w)


def trace_frontier(means, cov, mu_grid, *, ridge: bool = False,
                   asset_ids: list[str] | None = None) -> list[FrontierPoint]:
    """Evaluate the frontier over a grid of target means."""
    grid = list(mu_grid)
    if not grid:
        raise ValueError("empty target grid")
    return [
        efficient_weights(means, cov, mu, ridge=ridge, asset_ids=asset_ids)
        for mu in grid
    ]
