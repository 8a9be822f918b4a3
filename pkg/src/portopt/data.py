"""Return construction and descriptive statistics.

The pipeline here is: load monthly price CSVs, align the series on their
common months (inner join, no imputation), turn prices into nominal net
returns, deflate by a monthly inflation-rate series to get real returns,
and summarize. All functions are pure; inputs are never mutated.

Conventions. Returns are net per-period fractions ((P_t - P_{t-1}) / P_{t-1});
a gross view (1 + r) is available on the panel for callers that need it,
since published summary tables in this space are often ambiguous about which
convention they report. Real returns deflate gross-to-gross:
(1 + r) / (1 + i) - 1, computed as (r - i) / (1 + i) so that zero inflation
is an exact identity.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError, ZeroVarianceError

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


def parse_month(text: str) -> str:
    """Validate and canonicalize a YYYY-MM month label."""
    m = _MONTH_RE.match(text.strip())
    if not m or not 1 <= int(m.group(2)) <= 12:
        raise DataError(f"invalid year-month value: {text!r}")
    return m.group(0)


def add_months(month: str, k: int) -> str:
    y, m = (int(p) for p in month.split("-"))
    total = y * 12 + (m - 1) + k
    return f"{total // 12:04d}-{total % 12 + 1:02d}"


def month_range(start: str, count: int) -> list[str]:
    return [add_months(start, k) for k in range(count)]


def _check_increasing(dates: list[str], label: str) -> None:
    for a, b in zip(dates, dates[1:]):
        if b <= a:
            raise DataError(f"{label}: dates not strictly increasing at {b}")


@dataclass(frozen=True)
class PriceSeries:
    """Monthly price observations for one asset."""

    asset_id: str
    dates: list[str]
    prices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "prices", np.asarray(self.prices, dtype=float))
        if len(self.dates) != self.prices.size:
            raise DataError(f"{self.asset_id}: dates/prices length mismatch")
        if self.prices.size < 2:
            raise DataError(f"{self.asset_id}: at least 2 observations required")
        _check_increasing(self.dates, self.asset_id)
        if np.any(self.prices <= 0):
            raise DataError(f"{self.asset_id}: non-positive price")


@dataclass(frozen=True)
class InflationSeries:
    """Monthly inflation rates as per-period fractions."""

    dates: list[str]
    rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rates", np.asarray(self.rates, dtype=float))
        if len(self.dates) != self.rates.size:
            raise DataError("inflation: dates/rates length mismatch")
        _check_increasing(self.dates, "inflation")
        if np.any(self.rates <= -1):
            raise DataError("inflation rate at or below -100%")

    def rate_for(self, month: str) -> float:
        try:
            return float(self.rates[self.dates.index(month)])
        except ValueError:
            raise DataError(f"missing inflation rate for {month}") from None


@dataclass(frozen=True)
class ReturnPanel:
    """Aligned monthly return matrix: rows are months, columns are assets.

    ``convention`` records what the values mean: "nominal" or "real" panels
    are guaranteed to hold net returns above -100%; "simulated" panels carry
    model output and skip that check.
    """

    asset_ids: list[str]
    dates: list[str]
    values: np.ndarray
    convention: str = "nominal"

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.convention not in ("nominal", "real", "simulated"):
            raise DataError(f"unknown panel convention: {self.convention}")
        t, n = self.values.shape if self.values.ndim == 2 else (0, 0)
        if self.values.ndim != 2 or n != len(self.asset_ids) or t != len(self.dates):
            raise DataError("panel shape does not match labels")
        if t < 1 or n < 1:
            raise DataError("panel must have at least one row and one column")
        if np.isnan(self.values).any():
            raise DataError("panel contains missing cells")
        _check_increasing(self.dates, "panel")
        if self.convention != "simulated" and np.any(self.values <= -1):
            raise DataError("net return at or below -100%")

    @property
    def n_periods(self) -> int:
        return self.values.shape[0]

    @property
    def n_assets(self) -> int:
        return self.values.shape[1]

    @property
    def gross_values(self) -> np.ndarray:
        """Gross view (1 + r) of the same panel."""
        return self.values + 1.0

    def column(self, asset_id: str) -> np.ndarray:
        try:
            return self.values[:, self.asset_ids.index(asset_id)]
        except ValueError:
            raise DataError(f"asset not in panel: {asset_id}") from None

    def select(self, asset_ids: Iterable[str]) -> "ReturnPanel":
        ids = list(asset_ids)
        cols = []
        for a in ids:
            if a not in self.asset_ids:
                raise DataError(f"asset not in panel: {a}")
            cols.append(self.asset_ids.index(a))
        return ReturnPanel(ids, list(self.dates), self.values[:, cols], self.convention)

    def drop(self, asset_id: str) -> "ReturnPanel":
        return self.select([a for a in self.asset_ids if a != asset_id])


@dataclass(frozen=True)
class StatsRecord:
    """Per-asset summary row. Field names match the report schema."""

    mean: float
    median: float
    std_dev: float
    kurtosis: float
    skewness: float
    range: float
    min: float
    max: float
    count: int


def _read_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing file: {p}")
    with p.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty file: {p}") from None
        return [h.strip() for h in header], [row for row in reader]


def load_panel_csv(path: str | Path, schema: list[str] | None = None) -> dict[str, PriceSeries]:
    """Load a wide price CSV (columns: date, one column per asset).

    Rows are validated one by one; the first offending row is reported by
    its data-row number (header excluded). ``schema`` optionally pins the
    expected header.
    """
    header, rows = _read_rows(path)
    if schema is not None and header != list(schema):
        raise DataError(f"unexpected columns {header}, expected {list(schema)}")
    if not header or header[0] != "date":
        raise DataError("first column must be named 'date'")
    assets = header[1:]
    if not assets:
        raise DataError("no asset columns found")

    dates: list[str] = []
    seen: set[str] = set()
    cells: list[list[float]] = []
    for k, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"ragged row, row {k}")
        try:
            month = parse_month(row[0])
        except DataError:
            raise DataError(f"unparseable date, row {k}") from None
        if month in seen:
            raise DataError(f"duplicate date, row {k}")
        seen.add(month)
        parsed = []
        for cell in row[1:]:
            try:
                value = float(cell)
            except ValueError:
                raise DataError(f"unparseable value, row {k}") from None
            if not math.isfinite(value):
                raise DataError(f"unparseable value, row {k}")
            if value <= 0:
                raise DataError(f"non-positive price, row {k}")
            parsed.append(value)
        dates.append(month)
        cells.append(parsed)

    order = np.argsort(dates, kind="stable")
    dates = [dates[i] for i in order]
    matrix = np.asarray(cells, dtype=float)[order]
    return {
        asset: PriceSeries(asset, list(dates), matrix[:, j])
        for j, asset in enumerate(assets)
    }


def load_inflation_csv(path: str | Path) -> InflationSeries:
    """Load an inflation CSV with columns date,rate."""
    header, rows = _read_rows(path)
    if header != ["date", "rate"]:
        raise DataError(f"expected columns date,rate, got {header}")
    dates, rates = [], []
    for k, row in enumerate(rows, start=1):
        if len(row) != 2:
            raise DataError(f"ragged row, row {k}")
        try:
            dates.append(parse_month(row[0]))
        except DataError:
            raise DataError(f"unparseable date, row {k}") from None
        try:
            rates.append(float(row[1]))
        except ValueError:
            raise DataError(f"unparseable value, row {k}") from None
    order = np.argsort(dates, kind="stable")
    return InflationSeries([dates[i] for i in order], np.asarray(rates)[order])


def to_nominal_returns(series: Mapping[str, PriceSeries]) -> ReturnPanel:
    """Inner-join the price series on month and compute net returns.

    The output dates are exactly the common dates minus the first one.
    """
    if not series:
        raise DataError("no price series given")
    common: set[str] | None = None
    for s in series.values():
        ds = set(s.dates)
        common = ds if common is None else (common & ds)
    assert common is not None
    if len(common) == 0:
        raise DataError("price series share no common months")
    if len(common) == 1:
        raise DataError("price series share only a single month")
    dates = sorted(common)
    cols = []
    for s in series.values():
        idx = [s.dates.index(d) for d in dates]
        p = s.prices[idx]
        cols.append(np.diff(p) / p[:-1])
    return ReturnPanel(
        list(series.keys()), dates[1:], np.column_stack(cols), "nominal"
    )


def to_real_returns(panel: ReturnPanel, inflation: InflationSeries) -> ReturnPanel:
    """Deflate a nominal panel month by month.

    Net real return is (1+r)/(1+i) - 1, evaluated as (r - i)/(1 + i); with
    zero inflation the panel is returned bit-for-bit unchanged.
    """
    if panel.convention != "nominal":
        raise DataError(f"expected a nominal panel, got {panel.convention}")
    rates = np.array([inflation.rate_for(d) for d in panel.dates])
    real = (panel.values - rates[:, None]) / (1.0 + rates[:, None])
    return ReturnPanel(list(panel.asset_ids), list(panel.dates), real, "real")


def _moments(x: np.ndarray) -> tuple[float, float, float]:
    """Sample std plus bias-corrected skewness and excess kurtosis.

    These are the spreadsheet conventions (sample standard deviation with
    n-1; SKEW/KURT small-sample corrections), so user data summarized here
    lines up with spreadsheet output. Underpowered or zero-variance moments
    come back as NaN.
    """
    n = x.size
    if n < 2:
        return math.nan, math.nan, math.nan
    mean = x.mean()
    s2 = ((x - mean) ** 2).sum() / (n - 1)
    std = math.sqrt(s2)
    if std == 0.0 or n < 3:
        return std, math.nan, math.nan
    z = (x - mean) / std
    skew = n / ((n - 1) * (n - 2)) * (z**3).sum()
    if n < 4:
        return std, math.nan, skew
    kurt = (
        n * (n + 1) / ((n - 1) * (n - 2) * (n - 3)) * (z**4).sum()
        - 3 * (n - 1) ** 2 / ((n - 2) * (n - 3))
    )
    return std, kurt, skew


def descriptive_stats(panel: ReturnPanel) -> dict[str, StatsRecord]:
    """Summary statistics per asset, in panel column order."""
    if panel.n_periods < 2:
        raise DataError("at least 2 observations are required for statistics")
    out: dict[str, StatsRecord] = {}
    for j, asset in enumerate(panel.asset_ids):
        x = panel.values[:, j]
        std, kurt, skew = _moments(x)
        lo, hi = float(x.min()), float(x.max())
        out[asset] = StatsRecord(
            mean=float(x.mean()),
            median=float(np.median(x)),
            std_dev=std,
            kurtosis=kurt,
            skewness=skew,
            range=hi - lo,
            min=lo,
            max=hi,
            count=int(x.size),
        )
    return out


def correlation_matrix(panel: ReturnPanel) -> np.ndarray:
    """Pearson correlation matrix of the panel columns.

    Requires at least 3 periods and positive variance in every column;
    a degenerate column is reported by asset id.
    """
    if panel.n_periods < 3:
        raise DataError("at least 3 observations are required for correlations")
    z = panel.values - panel.values.mean(axis=0)
    ss = (z * z).sum(axis=0)
    for j, asset in enumerate(panel.asset_ids):
        if ss[j] <= 0.0:
            raise ZeroVarianceError(asset)
    norm = np.sqrt(ss)
    n = panel.n_assets
    corr = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            r = float(z[:, i] @ z[:, j] / (norm[i] * norm[j]))
            r = min(1.0, max(-1.0, r))
            corr[i, j] = corr[j, i] = r
    return corr
