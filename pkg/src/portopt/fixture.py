"""Bundled synthetic dataset generator.

Licensed index and exchange feeds cannot be redistributed, so the demo and
test data ship as code: a seeded generator for a monthly panel of one
crypto asset, six developed-market equity indices and a short T-bill
series, spanning 141 return months (July 2010 through April 2022 price
history). Marginal moments are calibrated per asset; the dependence
structure comes from a target correlation matrix projected to the nearest
valid (positive semidefinite, unit diagonal) correlation.

Monthly real gross returns are drawn lognormal with each asset's (m, s)
chosen so the net-return mean and standard deviation hit the calibration
targets exactly in population; lognormal marginals keep gross returns
positive (prices stay valid) and give the crypto column the heavy right
tail such samples show. Prices are integrated from the generated real
returns composed with a small synthetic inflation-rate series, so running
the full load/deflate pipeline on the emitted CSVs recovers the panel.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .data import InflationSeries, PriceSeries, ReturnPanel, month_range
from .numerics import cholesky_factor

FIXTURE_ASSETS = [
    "BTC",
    "MSCI_World",
    "MSCI_USA",
    "MSCI_UK",
    "MSCI_Europe_ex_UK",
    "MSCI_Japan",
    "MSCI_Pacific_ex_Japan",
    "US_Tbill_1M",
]

# Net monthly real-return calibration targets (mean, standard deviation).
# The crypto column dominates both moments by an order of magnitude, the
# equity indices sit at typical developed-market levels, and the bill
# series is near-riskless.
FIXTURE_MEANS = np.array(
    [0.172038733, 0.00482111888, 0.00683637294, 0.00595941886,
     0.00629781454, 0.00617580191, 0.00622059806, 0.00795015193]
)
FIXTURE_STDS = np.array(
    [0.560214599, 0.079260998, 0.044266323, 0.022178124,
     0.021626692, 0.023967518, 0.029836927, 0.003]
)

# Raw dependence targets; projected to the nearest valid correlation below.
_RAW_CORRELATION = np.array([
    [1.0, -0.899410844, 0.862045754, -0.585385261, 0.215228646, 0.183992924, -0.051965578, 0.04138583],
    [-0.899410844, 1.0, -0.787293815, 0.716525815, -0.049546817, -0.083852555, 0.203249143, -0.055290322],
    [0.862045754, -0.787293815, 1.0, -0.422379548, 0.540784214, 0.38217477, 0.253690658, 0.05110286],
    [-0.585385261, 0.716525815, -0.422379548, 1.0, 0.219775739, 0.147872605, 0.424709816, -0.037710118],
    [0.215228646, -0.049546817, 0.540784214, 0.219775739, 1.0, 0.527447299, 0.524463447, 0.022530494],
    [0.183992924, -0.083852555, 0.38217477, 0.147872605, 0.527447299, 1.0, 0.124163037, 0.040380562],
    [-0.051965578, 0.203249143, 0.253690658, 0.424709816, 0.524463447, 0.124163037, 1.0, 0.016517151],
    [0.04138583, -0.055290322, 0.05110286, -0.037710118, 0.022530494, 0.040380562, 0.016517151, 1.0],
])

FIXTURE_RETURN_MONTHS = 141
FIXTURE_FIRST_PRICE_MONTH = "2010-07"
FIXTURE_BASE_PRICE = 100.0

INFLATION_MEAN = 0.002
INFLATION_STD = 0.0015


def nearest_psd_correlation(corr: np.ndarray, min_eig: float = 1e-6,
                            max_iterations: int = 200) -> np.ndarray:
    """Alternating projection onto {eigenvalues >= min_eig} and
    {unit diagonal}; returns an exactly symmetric matrix."""
    a = (corr + corr.T) / 2.0
    for _ in range(max_iterations):
        vals, vecs = np.linalg.eigh(a)
        if vals.min() >= min_eig:
            break
        vals = np.clip(vals, min_eig, None)
        a = (vecs * vals) @ vecs.T
        d = np.sqrt(np.clip(a.diagonal(), min_eig, None))
        a = a / np.outer(d, d)
        np.fill_diagonal(a, 1.0)
        a = (a + a.T) / 2.0
    np.fill_diagonal(a, 1.0)
    return (a + a.T) / 2.0


def _lognormal_params(mean: np.ndarray, std: np.ndarray):
    """(m, s) of log gross returns matching net mean/std in population."""
    gross = 1.0 + mean
    s2 = np.log1p((std / gross) ** 2)
    m = np.log(gross) - s2 / 2.0
    return m, np.sqrt(s2)


def generate_fixture(seed: int) -> tuple[dict[str, PriceSeries], InflationSeries, ReturnPanel]:
    """Build the synthetic dataset: price series, inflation rates and the
    underlying real-return panel. Deterministic given the seed."""
    rng = np.random.default_rng(seed)
    n = len(FIXTURE_ASSETS)
    t = FIXTURE_RETURN_MONTHS

    corr = nearest_psd_correlation(_RAW_CORRELATION)
    low = cholesky_factor(corr)
    z = rng.standard_normal((t, n)) @ low.T
    m, s = _lognormal_params(FIXTURE_MEANS, FIXTURE_STDS)
    gross_real = np.exp(m + s * z)

    inflation = rng.normal(INFLATION_MEAN, INFLATION_STD, size=t)
    inflation = np.clip(inflation, -0.5, 0.5)

    months = month_range(FIXTURE_FIRST_PRICE_MONTH, t + 1)
    gross_nominal = gross_real * (1.0 + inflation)[:, None]
    prices = FIXTURE_BASE_PRICE * np.vstack(
        [np.ones(n), np.cumprod(gross_nominal, axis=0)]
    )

    series = {
        asset: PriceSeries(asset, list(months), prices[:, j])
        for j, asset in enumerate(FIXTURE_ASSETS)
    }
    cpi = InflationSeries(months[1:], inflation)
    panel = ReturnPanel(FIXTURE_ASSETS, months[1:], gross_real - 1.0, "real")
    return series, cpi, panel


def write_fixture(out_dir: str | Path, seed: int) -> tuple[Path, Path]:
    """Write prices.csv and cpi.csv for the synthetic dataset."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series, cpi, _ = generate_fixture(seed)
    months = next(iter(series.values())).dates

    prices_path = out / "prices.csv"
    with prices_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + FIXTURE_ASSETS)
        for i, month in enumerate(months):
            writer.writerow(
                [month] + [repr(float(series[a].prices[i])) for a in FIXTURE_ASSETS]
            )

    cpi_path = out / "cpi.csv"
    with cpi_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "rate"])
        for month, rate in zip(cpi.dates, cpi.rates):
            writer.writerow([month, repr(float(rate))])
    return prices_path, cpi_path
