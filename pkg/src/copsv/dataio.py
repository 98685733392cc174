"""CSV readers/writers and the flat key=value run-configuration parser.

All writers emit a header row and shortest-round-trip float formatting, so
reading a file back through the matching parser reproduces the original
values bit for bit.  Market data files carry an ISO date in the first
column; simulated matrices are plain numeric tables.
"""
from __future__ import annotations

import csv
import datetime as _dt
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bicop import parse_family
from .forecast import VarSeries
from .joint import JointChain
from .scenarios import DependenceScenario, JointScenario

__all__ = [
    "MarketData",
    "read_config_file",
    "read_draws_csv",
    "read_market_csv",
    "read_matrix_csv",
    "read_truth_csv",
    "read_var_csv",
    "write_draws_csv",
    "write_market_csv",
    "write_matrix_csv",
    "write_truth_csv",
    "write_var_csv",
]


def _fmt(x: float) -> str:
    """Shortest decimal string that parses back to exactly the same float."""
    return repr(float(x))


def _parse_float(txt: str, where: str) -> float:
    try:
        return float(txt)
    except ValueError as exc:
        raise ValueError(f"{where}: cannot parse {txt!r} as a number") from exc


def _check_finite(values: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{where} contains NaN or infinite entries")


def _level_label(level: float) -> str:
    return f"{level * 100:g}"


def _label_level(label: str) -> float:
    return float(label) / 100.0


# ---------------------------------------------------------------------------
# plain numeric matrices (simulated data)
# ---------------------------------------------------------------------------

def write_matrix_csv(path, values, prefix: str = "z") -> None:
    """Write a T×d numeric matrix with ``prefix_1..prefix_d`` headers."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    _check_finite(values, "matrix")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"{prefix}_{j + 1}" for j in range(values.shape[1])])
        for row in values:
            writer.writerow([_fmt(x) for x in row])


def read_matrix_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric matrix written by :func:`write_matrix_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if not body:
        raise ValueError(f"{path}: no data rows")
    out = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i + 2} has {len(row)} fields, "
                             f"expected {len(header)}")
        out[i] = [_parse_float(x, f"{path} row {i + 2}") for x in row]
    _check_finite(out, str(path))
    return header, out


# ---------------------------------------------------------------------------
# market data (ISO dates + returns or prices)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarketData:
    """Dated return matrix parsed from a market CSV."""

    dates: tuple[str, ...]
    columns: tuple[str, ...]
    z: np.ndarray

    @property
    def n_obs(self) -> int:
        return self.z.shape[0]

    @property
    def n_margins(self) -> int:
        return self.z.shape[1]


def write_market_csv(path, dates, values, columns=None) -> None:
    """Write dated series: ISO date first column, one column per margin."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    _check_finite(values, "market data")
    dates = [str(d) for d in dates]
    if len(dates) != values.shape[0]:
        raise ValueError("dates and value rows must have equal length")
    if columns is None:
        columns = [f"z_{j + 1}" for j in range(values.shape[1])]
    if len(columns) != values.shape[1]:
        raise ValueError("column names and value columns must have equal length")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", *columns])
        for d, row in zip(dates, values):
            writer.writerow([d, *[_fmt(x) for x in row]])


def read_market_csv(path, kind: str = "returns") -> MarketData:
    """Read a dated CSV of returns or prices.

    ``kind='returns'`` takes the numeric columns as-is; ``kind='prices'``
    converts to log returns ln(P_t / P_{t-1}), dropping the first date.
    """
    if kind not in ("returns", "prices"):
        raise ValueError("kind must be 'returns' or 'prices'")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: expected a header and at least one row")
    header = rows[0]
    if len(header) < 2 or header[0].strip().lower() != "date":
        raise ValueError(f"{path}: first column must be 'date'")
    columns = tuple(header[1:])
    dates = []
    values = np.empty((len(rows) - 1, len(columns)))
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i + 2} has {len(row)} fields, "
                             f"expected {len(header)}")
        try:
            _dt.date.fromisoformat(row[0])
        except ValueError as exc:
            raise ValueError(f"{path}: row {i + 2} has non-ISO date "
                             f"{row[0]!r}") from exc
        dates.append(row[0])
        values[i] = [_parse_float(x, f"{path} row {i + 2}") for x in row[1:]]
    _check_finite(values, str(path))
    if kind == "prices":
        if len(dates) < 2:
            raise ValueError(f"{path}: prices need at least two rows")
        if np.any(values <= 0.0):
            raise ValueError(f"{path}: prices must be strictly positive")
        values = np.diff(np.log(values), axis=0)
        dates = dates[1:]
    return MarketData(dates=tuple(dates), columns=columns, z=values)


# ---------------------------------------------------------------------------
# generating truths
# ---------------------------------------------------------------------------

def write_truth_csv(path, scenario) -> None:
    """Write the generating parameters of a preset, one row per margin."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if isinstance(scenario, JointScenario):
            p = scenario.params
            writer.writerow(["margin", "mu", "phi", "sigma", "tau", "family"])
            for j in range(scenario.n_margins):
                writer.writerow([j + 1, _fmt(p.mu[j]), _fmt(p.phi[j]),
                                 _fmt(p.sigma[j]), _fmt(p.tau[j]),
                                 p.families[j].value])
        elif isinstance(scenario, DependenceScenario):
            writer.writerow(["margin", "tau", "family"])
            for j in range(scenario.n_margins):
                writer.writerow([j + 1, _fmt(scenario.tau[j]),
                                 scenario.families[j].value])
        else:
            raise TypeError("scenario must be a joint or dependence preset")


def read_truth_csv(path) -> dict[str, object]:
    """Read a truth file back into arrays keyed by column name."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: expected a header and at least one row")
    header, body = rows[0], rows[1:]
    out: dict[str, object] = {}
    for k, name in enumerate(header):
        col = [row[k] for row in body]
        if name == "margin":
            out[name] = np.array([int(x) for x in col])
        elif name == "family":
            out[name] = tuple(parse_family(x) for x in col)
        else:
            out[name] = np.array([_parse_float(x, f"{path} column {name}")
                                  for x in col])
    return out


# ---------------------------------------------------------------------------
# posterior draws
# ---------------------------------------------------------------------------

def write_draws_csv(path, chain: JointChain) -> None:
    """Write post-burn-in draws: static blocks, tau and family codes."""
    mu, phi, sigma = chain.mu, chain.phi, chain.sigma
    tau, fams = chain.tau, chain.families
    d = mu.shape[1]
    header = ([f"mu_{j + 1}" for j in range(d)]
              + [f"phi_{j + 1}" for j in range(d)]
              + [f"sigma_{j + 1}" for j in range(d)]
              + [f"tau_{j + 1}" for j in range(d)]
              + [f"m_{j + 1}" for j in range(d)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(mu.shape[0]):
            row = ([_fmt(x) for x in mu[i]] + [_fmt(x) for x in phi[i]]
                   + [_fmt(x) for x in sigma[i]] + [_fmt(x) for x in tau[i]]
                   + [str(int(c)) for c in fams[i]])
            writer.writerow(row)


def read_draws_csv(path) -> dict[str, np.ndarray]:
    """Read a draws file back into per-block arrays ('mu', ..., 'm')."""
    header, raw = _read_text_table(path)
    blocks: dict[str, list[int]] = {}
    for k, name in enumerate(header):
        stem = name.rsplit("_", 1)[0]
        blocks.setdefault(stem, []).append(k)
    out: dict[str, np.ndarray] = {}
    for stem, cols in blocks.items():
        sub = [[row[k] for k in cols] for row in raw]
        if stem == "m":
            out[stem] = np.array([[int(x) for x in row] for row in sub])
        else:
            out[stem] = np.array(
                [[_parse_float(x, f"{path} column {stem}") for x in row]
                 for row in sub])
    return out


def _read_text_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: expected a header and at least one row")
    header, body = rows[0], rows[1:]
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i + 2} has {len(row)} fields, "
                             f"expected {len(header)}")
    return header, body


# ---------------------------------------------------------------------------
# VaR series
# ---------------------------------------------------------------------------

def write_var_csv(path, series: VarSeries) -> None:
    """Write per-day VaR forecasts, realized returns and violation flags.

    Failed forecast days keep their date and realized return; VaR cells hold
    ``nan`` and violation flags are empty.
    """
    labels = [_level_label(l) for l in series.levels]
    header = (["date", "realized"] + [f"var_{lb}" for lb in labels]
              + [f"viol_{lb}" for lb in labels])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, date in enumerate(series.dates):
            row = [str(date), _fmt(series.realized[i])]
            row += [_fmt(series.var_values[i, k])
                    for k in range(len(series.levels))]
            for k in range(len(series.levels)):
                var = series.var_values[i, k]
                row.append("" if math.isnan(var)
                           else str(int(series.realized[i] < var)))
            writer.writerow(row)


def read_var_csv(path) -> VarSeries:
    """Read a VaR file back into a :class:`VarSeries` (statics omitted)."""
    header, body = _read_text_table(path)
    if header[:2] != ["date", "realized"]:
        raise ValueError(f"{path}: expected 'date,realized,...' header")
    var_cols = [(k, name) for k, name in enumerate(header)
                if name.startswith("var_")]
    if not var_cols:
        raise ValueError(f"{path}: no var_* columns")
    levels = tuple(_label_level(name[4:]) for _, name in var_cols)
    dates = tuple(row[0] for row in body)
    realized = np.array([_parse_float(row[1], f"{path} realized")
                         for row in body])
    var_values = np.array(
        [[_parse_float(row[k], f"{path} {name}") for k, name in var_cols]
         for row in body])
    failures = tuple(i for i in range(len(body))
                     if np.any(np.isnan(var_values[i])))
    return VarSeries(dates=dates, levels=levels, var_values=var_values,
                     realized=realized, failures=failures)


# ---------------------------------------------------------------------------
# run configuration files
# ---------------------------------------------------------------------------

def read_config_file(path) -> dict[str, str]:
    """Parse a flat ``key = value`` text file.

    Blank lines and ``#`` comments are ignored; keys must be unique.  Values
    are returned as strings; interpretation belongs to the run configuration.
    """
    out: dict[str, str] = {}
    text = Path(path).read_text()
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{ln}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ValueError(f"{path}:{ln}: empty key")
        if key in out:
            raise ValueError(f"{path}:{ln}: duplicate key {key!r}")
        out[key] = value
    return out
