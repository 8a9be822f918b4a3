"""Report writers and the matching readers.

Every file the CLI emits can be parsed back by a reader in this module,
and identical inputs produce byte-identical files: floats are written with
repr (shortest round-trip form) and no timestamps or environment details
ever enter an output.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .cvar import BacktestSummary, DetailRecord, SummaryRow
from .data import StatsRecord
from .errors import DataError
from .meanvar import FrontierPoint, WeightVector
from .regime import FilterOutput, FitReport

STATS_FIELDS = [
    "mean", "median", "std_dev", "kurtosis", "skewness",
    "range", "min", "max", "count",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _parse_float(text: str) -> float | None:
    return None if text == "" else float(text)


# -- statistics -------------------------------------------------------------


def write_stats(path: str | Path, stats: dict[str, StatsRecord], fmt: str) -> Path:
    path = Path(path)
    if fmt == "json":
        payload = {asset: asdict(rec) for asset, rec in stats.items()}
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        return path
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["asset"] + STATS_FIELDS)
        for asset, rec in stats.items():
            row = asdict(rec)
            writer.writerow([asset] + [_fmt(row[f]) for f in STATS_FIELDS])
    return path


def read_stats(path: str | Path) -> dict[str, StatsRecord]:
    path = Path(path)
    if path.suffix == ".json":
        payload = json.loads(path.read_text(encoding="utf-8"))
        return {a: StatsRecord(**rec) for a, rec in payload.items()}
    out: dict[str, StatsRecord] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["asset"] + STATS_FIELDS:
            raise DataError(f"unexpected stats header: {header}")
        for row in reader:
            values = dict(zip(STATS_FIELDS, row[1:]))
            out[row[0]] = StatsRecord(
                **{f: float(values[f]) for f in STATS_FIELDS[:-1]},
                count=int(values["count"]),
            )
    return out


# -- correlation ------------------------------------------------------------


def write_correlation(path: str | Path, assets: list[str], matrix: np.ndarray,
                      fmt: str) -> Path:
    path = Path(path)
    if fmt == "json":
        payload = {"assets": assets, "matrix": [list(map(float, r)) for r in matrix]}
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        return path
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["asset"] + assets)
        for asset, row in zip(assets, matrix):
            writer.writerow([asset] + [_fmt(v) for v in row])
    return path


def read_correlation(path: str | Path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if path.suffix == ".json":
        payload = json.loads(path.read_text(encoding="utf-8"))
        return list(payload["assets"]), np.asarray(payload["matrix"], dtype=float)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        assets = next(reader)[1:]
        rows = [[float(v) for v in row[1:]] for row in reader]
    return assets, np.asarray(rows, dtype=float)


# -- weights ----------------------------------------------------------------


def write_weights(path: str | Path, weights: WeightVector, fmt: str) -> Path:
    path = Path(path)
    if fmt == "json":
        path.write_text(
            json.dumps(weights.as_dict(), indent=2) + "\n", encoding="utf-8"
        )
        return path
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["asset_id", "weight"])
        for asset, w in zip(weights.asset_ids, weights.weights):
            writer.writerow([asset, _fmt(w)])
    return path


def read_weights(path: str | Path) -> WeightVector:
    path = Path(path)
    if path.suffix == ".json":
        payload = json.loads(path.read_text(encoding="utf-8"))
        return WeightVector(list(payload), np.array(list(payload.values())))
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        ids, ws = [], []
        for row in reader:
            ids.append(row[0])
            ws.append(float(row[1]))
    return WeightVector(ids, np.asarray(ws))


# -- frontier ---------------------------------------------------------------


def write_frontier(path: str | Path, points: list[FrontierPoint]) -> Path:
    path = Path(path)
    assets = points[0].weights.asset_ids
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mu", "variance", "std_dev"] + [f"w_{a}" for a in assets])
        for pt in points:
            writer.writerow(
                [_fmt(pt.target_mean), _fmt(pt.variance), _fmt(pt.std_dev)]
                + [_fmt(w) for w in pt.weights.weights]
            )
    return path


def read_frontier(path: str | Path) -> list[FrontierPoint]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        assets = [h[2:] for h in header[3:]]
        points = []
        for row in reader:
            mu, var, std = (float(v) for v in row[:3])
            w = WeightVector(list(assets), np.array([float(v) for v in row[3:]]))
            points.append(FrontierPoint(mu, var, std, w))
    return points


# -- backtest ---------------------------------------------------------------

SUMMARY_FIELDS = [
    "strategy", "universe", "avg_designated_weight", "avg_return",
    "avg_cvar", "risk_return_ratio", "n_dates", "n_failed",
]


def write_backtest_summary(path: str | Path, summary: BacktestSummary,
                           fmt: str) -> Path:
    path = Path(path)
    if fmt == "json":
        payload = {
            "mode": summary.mode,
            "alpha": summary.alpha,
            "window": summary.window,
            "designated_asset": summary.designated_asset,
            "rows": [asdict(r) for r in summary.rows],
        }
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        return path
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_FIELDS)
        for r in summary.rows:
            writer.writerow([
                r.strategy, r.universe, _fmt(r.avg_designated_weight),
                _fmt(r.avg_return), _fmt(r.avg_cvar),
                _fmt(r.risk_return_ratio), str(r.n_dates), str(r.n_failed),
            ])
    return path


def read_backtest_summary(path: str | Path) -> list[SummaryRow]:
    path = Path(path)
    if path.suffix == ".json":
        payload = json.loads(path.read_text(encoding="utf-8"))
        return [SummaryRow(**row) for row in payload["rows"]]
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SUMMARY_FIELDS:
            raise DataError(f"unexpected summary header: {header}")
        for row in reader:
            rows.append(SummaryRow(
                strategy=row[0], universe=row[1],
                avg_designated_weight=_parse_float(row[2]),
                avg_return=float(row[3]), avg_cvar=float(row[4]),
                risk_return_ratio=_parse_float(row[5]),
                n_dates=int(row[6]), n_failed=int(row[7]),
            ))
    return rows


def write_backtest_detail(path: str | Path, summary: BacktestSummary,
                          assets: list[str]) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["date", "strategy", "universe"] + [f"w_{a}" for a in assets]
            + ["realized_return", "cvar", "insample_mean_return", "status"]
        )
        for rec in summary.details:
            weights = rec.weights or {}
            writer.writerow(
                [rec.date, rec.strategy, rec.universe]
                + [_fmt(weights.get(a)) for a in assets]
                + [
                    _fmt(rec.realized_return) if not math.isnan(rec.realized_return) else "",
                    _fmt(rec.cvar) if not math.isnan(rec.cvar) else "",
                    _fmt(rec.insample_mean_return) if not math.isnan(rec.insample_mean_return) else "",
                    rec.status,
                ]
            )
    return path


def read_backtest_detail(path: str | Path) -> list[DetailRecord]:
    records = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        assets = [h[2:] for h in header[3:-4]]
        for row in reader:
            ws = {
                a: float(v) for a, v in zip(assets, row[3 : 3 + len(assets)]) if v != ""
            }
            tail = row[3 + len(assets) :]
            records.append(DetailRecord(
                date=row[0], strategy=row[1], universe=row[2],
                weights=ws or None,
                realized_return=float(tail[0]) if tail[0] else math.nan,
                cvar=float(tail[1]) if tail[1] else math.nan,
                insample_mean_return=float(tail[2]) if tail[2] else math.nan,
                status=tail[3],
            ))
    return records


# -- regime fit -------------------------------------------------------------


def write_fit_json(path: str | Path, fit: FitReport) -> Path:
    path = Path(path)
    model = fit.model
    payload = {
        "n_states": model.n_states,
        "order": model.order,
        "asset_ids": fit.asset_ids,
        "states": [
            {
                "intercepts": [float(v) for v in model.intercepts[s]],
                "ar_coefficients": [
                    [[float(v) for v in row] for row in model.ar_coeffs[s, j]]
                    for j in range(model.order)
                ],
                "covariance": [
                    [float(v) for v in row] for row in model.covariances[s]
                ],
            }
            for s in range(model.n_states)
        ],
        "transition_matrix": [[float(v) for v in row] for row in model.transition],
        "initial_distribution": [float(v) for v in model.initial_probs],
        "log_likelihood": fit.log_likelihood,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "covariance_repaired": fit.covariance_repaired,
        "n_parameters": fit.n_parameters,
        "aic": fit.aic,
        "bic": fit.bic,
    }
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def read_fit_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_probability_trace(path: str | Path, output: FilterOutput) -> Path:
    if output.smoothed is None:
        raise ValueError("probability trace requires smoothed output")
    path = Path(path)
    k = output.filtered.shape[1]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["date"]
            + [f"filtered_{j + 1}" for j in range(k)]
            + [f"smoothed_{j + 1}" for j in range(k)]
        )
        for i, date in enumerate(output.dates):
            writer.writerow(
                [date]
                + [_fmt(v) for v in output.filtered[i]]
                + [_fmt(v) for v in output.smoothed[i]]
            )
    return path


def read_probability_trace(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        k = (len(header) - 1) // 2
        dates, filt, smooth = [], [], []
        for row in reader:
            dates.append(row[0])
            filt.append([float(v) for v in row[1 : 1 + k]])
            smooth.append([float(v) for v in row[1 + k :]])
    return dates, np.asarray(filt), np.asarray(smooth)
