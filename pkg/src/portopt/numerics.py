"""Self-contained numerical kernels for the optimizers.

Three primitives live here: a symmetric positive-definite factor/solve,
the multivariate Gaussian log-density built on it, and a dense two-phase
simplex with Bland's anti-cycling rule for linear programs with general
bounds. Everything is deterministic; no global state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import LpIterationLimitError, NotPositiveDefiniteError

_PIVOT_TOL = 1e-9
_LOG_2PI = 1.8378770664093453


@dataclass(frozen=True)
class SymMatrix:
    """Square symmetric matrix. Symmetry is exact by construction."""

    values: np.ndarray

    @classmethod
    def from_array(cls, a, *, tol: float = 1e-8) -> "SymMatrix":
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        scale = max(1.0, float(np.abs(a).max(initial=0.0)))
        if np.abs(a - a.T).max(initial=0.0) > tol * scale:
            raise ValueError("matrix is not symmetric within tolerance")
        return cls((a + a.T) / 2.0)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _as_matrix(a) -> np.ndarray:
    if isinstance(a, SymMatrix):
        return a.values
    return SymMatrix.from_array(a).values


def cholesky_factor(a) -> np.ndarray:
    """Lower-triangular L with L L' = A.

    Raises NotPositiveDefiniteError with the failing pivot index when a
    pivot drops below 1e-12 times the largest diagonal entry; the caller
    decides whether to retry with ridge regularization.
    """
    a = _as_matrix(a)
    n = a.shape[0]
    tol = 1e-12 * max(float(a.diagonal().max(initial=0.0)), 0.0)
    low = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - low[j, :j] @ low[j, :j]
        if d <= tol:
            raise NotPositiveDefiniteError(j)
        low[j, j] = np.sqrt(d)
        if j + 1 < n:
            low[j + 1 :, j] = (a[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return low


def _solve_lower(low: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Forward substitution, L x = b, with b a vector or matrix of columns."""
    x = np.array(b, dtype=float)
    for i in range(low.shape[0]):
        x[i] = (x[i] - low[i, :i] @ x[:i]) / low[i, i]
    return x


def _solve_upper_t(low: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Back substitution for L' x = b."""
    x = np.array(b, dtype=float)
    for i in range(low.shape[0] - 1, -1, -1):
        x[i] = (x[i] - low[i + 1 :, i] @ x[i + 1 :]) / low[i, i]
    return x


def spd_factor_solve(a, b) -> np.ndarray:
    """Solve A x = b for symmetric positive-definite A.

    b may be a vector or a matrix of stacked right-hand sides (columns).
    """
    low = cholesky_factor(a)
    b = np.asarray(b, dtype=float)
    squeeze = b.ndim == 1
    rhs = b[:, None] if squeeze else b
    x = _solve_upper_t(low, _solve_lower(low, rhs))
    return x[:, 0] if squeeze else x


def _cholesky_succeeds(a: np.ndarray) -> bool:
    n = a.shape[0]
    low = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - low[j, :j] @ low[j, :j]
        if d <= 0.0:
            return False
        low[j, j] = np.sqrt(d)
        if j + 1 < n:
            low[j + 1 :, j] = (a[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return True


def smallest_eigenvalue(a, tol: float = 1e-12) -> float:
    """Smallest eigenvalue of a symmetric matrix, by Cholesky bisection.

    A - t*I is positive definite exactly when t < lambda_min, so bisecting
    on t needs no eigen-decomposition. Intended for the small matrices this
    package works with (asset-universe sized).
    """
    a = _as_matrix(a)
    n = a.shape[0]
    if n == 0:
        raise ValueError("empty matrix")
    radius = np.abs(a).sum(axis=1) - np.abs(a.diagonal())
    lo = float((a.diagonal() - radius).min())
    hi = float(a.diagonal().min())
    scale = max(1.0, abs(lo), abs(hi))
    eye = np.eye(n)
    while hi - lo > tol * scale:
        mid = 0.5 * (lo + hi)
        if _cholesky_succeeds(a - mid * eye):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mvn_logpdf(x, mean, cov) -> float | np.ndarray:
    """Log-density of N(mean, cov) at x.

    x may be a single point (1-d) or a batch of points stacked in rows;
    a batch returns one value per row. Raises NotPositiveDefiniteError
    for a singular covariance.
    """
    mean = np.asarray(mean, dtype=float)
    x = np.asarray(x, dtype=float)
    low = cholesky_factor(cov)
    single = x.ndim == 1
    dev = (x[None, :] if single else x) - mean
    z = _solve_lower(low, dev.T)
    log_det = 2.0 * np.log(low.diagonal()).sum()
    d = mean.size
    vals = -0.5 * (d * _LOG_2PI + log_det + (z * z).sum(axis=0))
    return float(vals[0]) if single else vals


# ---------------------------------------------------------------------------
# Linear programming
# ---------------------------------------------------------------------------

_INF = np.inf


@dataclass
class LinearProgram:
    """min c'x subject to equality rows, sense-tagged inequality rows and
    per-variable bounds. Bounds default to free; use (0, None) etc. for
    one-sided restrictions. Senses are "<=" or ">=" per inequality row.
    """

    objective: np.ndarray
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    ineq_matrix: np.ndarray | None = None
    ineq_rhs: np.ndarray | None = None
    ineq_senses: Sequence[str] | None = None
    bounds: Sequence[tuple[float | None, float | None]] | None = None


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    objective: float | None = None
    dual_eq: np.ndarray | None = None  # one multiplier per equality row
    dual_objective: float | None = None
    pivots: int = 0


def _normalize_program(lp: LinearProgram):
    c = np.atleast_1d(np.asarray(lp.objective, dtype=float))
    n = c.size

    def _block(mat, rhs, label):
        if mat is None:
            return np.zeros((0, n)), np.zeros(0)
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        if mat.shape != (rhs.size, n):
            raise ValueError(f"{label} constraint dimensions are inconsistent")
        return mat, rhs

    a_eq, b_eq = _block(lp.eq_matrix, lp.eq_rhs, "equality")
    a_ub, b_ub = _block(lp.ineq_matrix, lp.ineq_rhs, "inequality")
    senses = list(lp.ineq_senses or [])
    if a_ub.shape[0] != len(senses):
        raise ValueError("one sense per inequality row is required")
    if any(s not in ("<=", ">=") for s in senses):
        raise ValueError("inequality senses must be '<=' or '>='")

    lower = np.full(n, -_INF)
    upper = np.full(n, _INF)
    if lp.bounds is not None:
        if len(lp.bounds) != n:
            raise ValueError("one bound pair per variable is required")
        for j, (lo, hi) in enumerate(lp.bounds):
            lower[j] = -_INF if lo is None else float(lo)
            upper[j] = _INF if hi is None else float(hi)
    if np.any(lower > upper):
        raise ValueError("variable lower bound exceeds upper bound")
    return c, a_eq, b_eq, a_ub, b_ub, senses, lower, upper


class _Simplex:
    """Bounded-variable simplex over A x = b with 0 <= x <= ub.

    All nonbasic variables sit at a bound (lower 0 or finite upper).
    Pricing is steepest reduced cost until a degenerate stall, then
    Bland's lowest-index rule until the next strict improvement; leaving
    ties always break on the lowest basic index. Every choice is
    rule-based, so identical inputs pivot identically.
    """

    def __init__(self, a: np.ndarray, b: np.ndarray, ub: np.ndarray, max_pivots: int):
        self.m, self.n = a.shape
        # The rhs rides along as the last tableau column so one broadcast
        # update per pivot covers it.
        self.tab = np.hstack([a.astype(float), b.astype(float)[:, None]])
        self.ub = ub.astype(float).copy()
        self.basis = np.zeros(self.m, dtype=int)
        self.basic = np.zeros(self.n, dtype=bool)
        self.at_upper = np.zeros(self.n, dtype=bool)
        self.max_pivots = max_pivots
        self.pivots = 0

    @property
    def beta(self) -> np.ndarray:
        return self.tab[:, -1]

    def basic_values(self) -> np.ndarray:
        up = np.flatnonzero(self.at_upper)
        if up.size:
            return self.beta - self.tab[:, up] @ self.ub[up]
        return self.beta.copy()

    def solution(self) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.at_upper] = self.ub[self.at_upper]
        x[self.basis] = self.basic_values()
        return x

    def _pivot(self, row: int, col: int) -> None:
        tab = self.tab
        tab[row] /= tab[row, col]
        factors = tab[:, col].copy()
        factors[row] = 0.0
        tab -= factors[:, None] * tab[row]
        leaving = self.basis[row]
        self.basic[leaving] = False
        self.basis[row] = col
        self.basic[col] = True
        self.at_upper[col] = False
        self.pivots += 1

    def run(self, cost: np.ndarray, enterable: np.ndarray) -> str:
        # Steepest reduced cost normally; after a degenerate stall the rule
        # switches to Bland's lowest-index choice, whose termination
        # guarantee breaks any cycle. Both rules are deterministic.
        stall_limit = 2 * (self.m + 16)
        degenerate_run = 0
        while True:
            if self.pivots >= self.max_pivots:
                raise LpIterationLimitError(
                    f"simplex exceeded {self.max_pivots} pivots"
                )
            xb = self.basic_values()
            z = cost - cost[self.basis] @ self.tab[:, :-1]
            # Entering test: z < -tol when at the lower bound, z > tol at
            # the upper; folding the sign makes it one comparison.
            gain = np.where(self.at_upper, -z, z)
            eligible = enterable & ~self.basic & (gain < -_PIVOT_TOL)
            if not eligible.any():
                return "optimal"
            if degenerate_run >= stall_limit:
                enter = int(np.argmax(eligible))  # Bland: lowest eligible
            else:
                masked = np.where(eligible, gain, 0.0)
                enter = int(np.argmin(masked))  # most negative, ties lowest
            from_upper = bool(self.at_upper[enter])
            d = self.tab[:, enter] if not from_upper else -self.tab[:, enter]

            # Ratio test: step length until a basic variable hits a bound
            # or the entering variable reaches its opposite bound.
            ub_basis = self.ub[self.basis]
            t_rows = np.full(self.m, _INF)
            down = d > _PIVOT_TOL
            t_rows[down] = np.maximum(xb[down], 0.0) / d[down]
            up = (d < -_PIVOT_TOL) & np.isfinite(ub_basis)
            t_rows[up] = np.maximum(ub_basis[up] - xb[up], 0.0) / (-d[up])
            flip_t = self.ub[enter]
            row_min = float(t_rows.min(initial=_INF))
            best_t = min(flip_t, row_min)
            if not np.isfinite(best_t):
                return "unbounded"
            if flip_t <= row_min:
                # No basic variable blocks first: the entering variable
                # swings across to its other bound (a strict improvement,
                # since zero-width columns never enter).
                self.at_upper[enter] = not from_upper
                self.pivots += 1
                degenerate_run = 0
                continue
            # Bland tie-break: among the blocking rows, leave the one whose
            # basic variable has the lowest index.
            ties = np.flatnonzero(t_rows <= row_min + 1e-12)
            row = int(ties[np.argmin(self.basis[ties])])
            leaving = int(self.basis[row])
            self._pivot(row, enter)
            self.at_upper[leaving] = bool(up[row])
            degenerate_run = degenerate_run + 1 if row_min <= 1e-12 else 0


def lp_solve(lp: LinearProgram, max_pivots: int = 1_000_000) -> LpSolution:
    """Solve a LinearProgram with the two-phase dense simplex.

    Free variables are split internally, shifted/mirrored variables carry
    their offsets back out, and the solution reports one dual multiplier
    per equality row. Exceeding the pivot cap raises
    LpIterationLimitError rather than returning a status.
    """
    c, a_eq, b_eq, a_ub, b_ub, senses, lower, upper = _normalize_program(lp)
    n = c.size
    n_eq = b_eq.size
    n_ub = b_ub.size

    # Map original variables onto internal columns with lower bound 0.
    col_of: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    offsets = np.zeros(n)
    col_ub: list[float] = []
    fixed = np.zeros(n)
    for j in range(n):
        lo, hi = lower[j], upper[j]
        if lo == hi:
            offsets[j] = lo
            fixed[j] = lo
            continue
        if np.isinf(lo) and np.isinf(hi):
            col_of[j].append((len(col_ub), 1.0))
            col_ub.append(_INF)
            col_of[j].append((len(col_ub), -1.0))
            col_ub.append(_INF)
        elif np.isinf(lo):
            # x = hi - x', x' >= 0
            offsets[j] = hi
            col_of[j].append((len(col_ub), -1.0))
            col_ub.append(_INF)
        else:
            offsets[j] = lo
            col_of[j].append((len(col_ub), 1.0))
            col_ub.append(hi - lo if np.isfinite(hi) else _INF)

    n_var_cols = len(col_ub)
    n_struct = n_var_cols + n_ub  # variable columns plus slacks
    m = n_eq + n_ub

    a_all = np.vstack([a_eq, a_ub]) if m else np.zeros((0, n))
    b_all = np.concatenate([b_eq, b_ub])
    a_int = np.zeros((m, n_struct))
    for j in range(n):
        for col, sign in col_of[j]:
            a_int[:, col] += sign * a_all[:, j]
    b_int = b_all - a_all @ offsets
    for i, sense in enumerate(senses):
        a_int[n_eq + i, n_var_cols + i] = 1.0 if sense == "<=" else -1.0

    c_int = np.zeros(n_struct)
    for j in range(n):
        for col, sign in col_of[j]:
            c_int[col] += sign * c[j]

    row_sign = np.where(b_int < 0, -1.0, 1.0)
    a_w = a_int * row_sign[:, None]
    b_w = b_int * row_sign

    # Crash basis: an inequality row whose slack kept coefficient +1 after
    # the sign normalization starts with its own slack basic (value b >= 0);
    # only the remaining rows need artificial variables.
    start_col = np.full(m, -1, dtype=int)
    for i in range(n_ub):
        gi = n_eq + i
        if a_w[gi, n_var_cols + i] == 1.0:
            start_col[gi] = n_var_cols + i
    art_rows = np.flatnonzero(start_col < 0)
    n_art = art_rows.size
    art_block = np.zeros((m, n_art))
    for j, r in enumerate(art_rows):
        art_block[r, j] = 1.0
        start_col[r] = n_struct + j

    ub_full = np.concatenate([
        np.asarray(col_ub, dtype=float),
        np.full(n_ub, _INF),  # slack columns
        np.full(n_art, _INF),  # artificial columns
    ])
    a_full = np.hstack([a_w, art_block])
    sx = _Simplex(a_full, b_w, ub_full, max_pivots)
    sx.basis = start_col.copy()
    sx.basic[sx.basis] = True

    # Phase 1: drive the artificial variables to zero.
    if n_art:
        cost1 = np.zeros(n_struct + n_art)
        cost1[n_struct:] = 1.0
        allow_all = np.ones(n_struct + n_art, dtype=bool)
        allow_all[ub_full <= _PIVOT_TOL] = False  # zero-width columns
        sx.run(cost1, allow_all)
        phase1 = float(cost1 @ sx.solution())
        if phase1 > 1e-8 * (1.0 + float(np.abs(b_w).max(initial=0.0))):
            return LpSolution(status="infeasible", pivots=sx.pivots)

    # Remove basic artificials: pivot them out where possible, otherwise the
    # row is redundant and is dropped.
    keep = np.ones(m, dtype=bool)
    for row in range(m):
        if sx.basis[row] < n_struct:
            continue
        target = -1
        for j in range(n_struct):
            if not sx.basic[j] and ub_full[j] > _PIVOT_TOL and abs(sx.tab[row, j]) > _PIVOT_TOL:
                target = j
                break
        if target >= 0:
            # Degenerate exchange at step zero; the current point is kept.
            sx._pivot(row, target)
        else:
            keep[row] = False
    if not keep.all():
        rows = np.flatnonzero(keep)
        sx.tab = sx.tab[rows]
        sx.basic[sx.basis[~keep]] = False
        sx.basis = sx.basis[rows]
        sx.m = rows.size
    kept_rows = np.flatnonzero(keep)

    # Phase 2 over the original objective; artificials may not re-enter.
    cost2 = np.concatenate([c_int, np.zeros(n_art)])
    enterable = np.zeros(n_struct + n_art, dtype=bool)
    enterable[:n_struct] = ub_full[:n_struct] > _PIVOT_TOL
    status = sx.run(cost2, enterable)
    if status == "unbounded":
        return LpSolution(status="unbounded", pivots=sx.pivots)

    # Refine the vertex against the original matrix: the pivoted tableau
    # accumulates roundoff, the basis itself is exact.
    basis_mat = a_full[np.ix_(kept_rows, sx.basis)]
    up_cols = np.flatnonzero(sx.at_upper)
    rhs_ref = b_w[kept_rows].copy()
    if up_cols.size:
        rhs_ref -= a_full[np.ix_(kept_rows, up_cols)] @ ub_full[up_cols]
    try:
        xb_ref = np.linalg.solve(basis_mat, rhs_ref)
        y_ref = np.linalg.solve(basis_mat.T, cost2[sx.basis])
    except np.linalg.LinAlgError:
        xb_ref = None
        y_ref = None

    x_int = sx.solution()
    if xb_ref is not None:
        x_int[sx.basis] = xb_ref
    x = fixed.copy()
    for j in range(n):
        if not col_of[j]:
            continue
        x[j] = offsets[j]
        for col, sign in col_of[j]:
            x[j] += sign * x_int[col]
    objective = float(c @ x)

    if y_ref is None:
        return LpSolution(
            status="optimal", x=x, objective=objective, pivots=sx.pivots
        )
    y_kept = y_ref
    y = np.zeros(m)
    y[kept_rows] = y_kept
    y_rows = y * row_sign
    dual_eq = y_rows[:n_eq].copy()

    z = c_int - y_kept @ a_w[kept_rows]
    finite = np.isfinite(ub_full[:n_struct])
    # Offsets and fixed variables shift both objectives by the same constant.
    shift = float(c @ fixed) + sum(c[j] * offsets[j] for j in range(n) if col_of[j])
    dual_objective = float(
        y_kept @ b_w[kept_rows]
        + (ub_full[:n_struct][finite] * np.minimum(z[finite], 0.0)).sum()
        + shift
    )

    return LpSolution(
        status="optimal",
        x=x,
        objective=objective,
        dual_eq=dual_eq,
        dual_objective=dual_objective,
        pivots=sx.pivots,
    )
