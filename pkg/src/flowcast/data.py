"""Station data: CSV ingestion, cleaning, chronological splits, synthetic flows."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .decomposition import DEFAULT_START, DEFAULT_STEP, TimeSeries
from .errors import InvalidInputError, ParseError, UnusableSeriesError
from .spatiotemporal import StationSeries

SAMPLES_PER_DAY = 96

DEFAULT_SCHEMA = {"time": "time", "station_id": "station_id", "flow": "flow"}
_MISSING = {"", "na", "nan", "null", "none"}


@dataclass
class RawSeries:
    """A series on a uniform grid whose missing slots are NaN."""

    values: np.ndarray
    start_time: datetime = DEFAULT_START
    step: timedelta = DEFAULT_STEP
    gaps: list = field(default_factory=list)

    def __len__(self):
        return self.values.size


def _parse_time(text, line):
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"cannot parse time {text!r}", line) from None


def _parse_flow(text, line):
    if text is None or text.strip().lower() in _MISSING:
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric flow {text!r}", line) from None
    if math.isinf(value):
        raise ParseError(f"infinite flow {text!r}", line)
    return value


def _gaps(mask):
    gaps, i, n = [], 0, mask.size
    while i < n:
        if mask[i]:
            j = i
            while j < n and mask[j]:
                j += 1
            gaps.append((i, j - i))
            i = j
        else:
            i += 1
    return gaps


def load_station_csv(path, schema=None, step=DEFAULT_STEP, adjacency=None):
    """Read ``time, station_id, flow`` rows into one series per station.

    Extra columns are ignored. Without a station column every row belongs to
    station ``"station"``. Each station's samples are placed on a uniform
    grid of ``step``; empty or missing flows and absent timestamps become NaN
    slots listed in ``RawSeries.gaps`` for :func:`clean_series` to fill.
    Line numbers in errors count the header as line 1.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ParseError(f"{path} is empty")
        header = [h.strip() for h in header]
        try:
            t_col = header.index(schema["time"])
            f_col = header.index(schema["flow"])
        except ValueError:
            raise ParseError(f"header must contain {schema['time']!r} and {schema['flow']!r}", 1) from None
        s_col = header.index(schema["station_id"]) if schema["station_id"] in header else None
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            station = row[s_col].strip() if s_col is not None else "station"
            rows.setdefault(station, []).append(
                (_parse_time(row[t_col], line), _parse_flow(row[f_col], line), line)
            )
    if not rows:
        raise ParseError(f"{path} has no data rows")

    out = []
    for station, items in rows.items():
        items.sort(key=lambda r: r[0])
        start, end = items[0][0], items[-1][0]
        n = int(round((end - start) / step)) + 1
        values = np.full(n, np.nan)
        seen = np.zeros(n, dtype=bool)
        for when, flow, line in items:
            offset = (when - start) / step
            k = int(round(offset))
            if abs(offset - k) > 1e-9:
                raise ParseError(f"time {when} is off the {step} grid", line)
            if seen[k]:
                raise ParseError(f"duplicate time {when} for station {station}", line)
            seen[k] = True
            values[k] = flow
        raw = RawSeries(values, start, step, _gaps(np.isnan(values)))
        out.append(StationSeries(station, raw, []))
    if adjacency:
        attach_neighbors(out, adjacency)
    return out


def load_adjacency(path):
    """Undirected neighbour pairs, one ``a,b`` pair per line; ``#`` starts a comment."""
    adj = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.replace(";", ",").split(",") if p.strip()]
            if len(parts) != 2:
                raise ParseError(f"expected a pair of station ids, got {line!r}", line_no)
            a, b = parts
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
    return adj


def attach_neighbors(stations, adjacency):
    for s in stations:
        s.neighbors = sorted(set(adjacency.get(s.station_id, [])))
    return stations


def write_station_csv(path, stations):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "station_id", "flow"])
        for s in stations:
            for when, v in zip(_times(s.series), s.series.values):
                w.writerow([when.isoformat(), s.station_id, "" if math.isnan(v) else repr(float(v))])


def write_adjacency(path, stations):
    pairs = set()
    for s in stations:
        for nb in s.neighbors:
            pairs.add(tuple(sorted((s.station_id, nb))))
    with open(path, "w", encoding="utf-8") as fh:
        for a, b in sorted(pairs):
            fh.write(f"{a},{b}\n")


def _times(series):
    return [series.start_time + i * series.step for i in range(len(series))]


def clean_series(series, k=6.0, max_missing=0.5):
    """Fill gaps and replace outliers by linear interpolation.

    Outliers are points with ``|x - median| > k * MAD`` (raw, unscaled MAD).
    Leading or trailing gaps take the nearest valid value.
    """
    if isinstance(series, TimeSeries):
        values, start, step = series.values.copy(), series.start_time, series.step
    elif isinstance(series, RawSeries):
        values, start, step = series.values.astype(float), series.start_time, series.step
    else:
        values, start, step = np.asarray(series, dtype=float).copy(), DEFAULT_START, DEFAULT_STEP
    n = values.size
    valid = np.isfinite(values)
    if valid.sum() < 2:
        raise UnusableSeriesError("need at least 2 valid points")
    if valid.sum() < (1.0 - max_missing) * n:
        raise UnusableSeriesError(f"{n - int(valid.sum())} of {n} samples missing")
    med = np.median(values[valid])
    mad = np.median(np.abs(values[valid] - med))
    outlier = valid & (np.abs(values - med) > k * mad)
    keep = valid & ~outlier
    if keep.sum() < 2:
        keep = valid
    idx = np.arange(n)
    filled = values.copy()
    if not keep.all():
        filled[~keep] = np.interp(idx[~keep], idx[keep], values[keep])
    return TimeSeries(filled, start, step)


def split_train_test(series, ratio=0.8):
    """Chronological split; the test set is the final segment."""
    if not 0 < ratio <= 1:
        raise InvalidInputError("ratio must lie in (0, 1]")
    x = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    cut = int(math.floor(x.size * ratio + 1e-9))
    return x[:cut], x[cut:]


def daily_profile(hour):
    """Two rush-hour peaks over a quiet night, built from two harmonics.

    The night trough sits at 0.2 of the daily mean.
    """
    phase = 2 * np.pi * (np.asarray(hour, dtype=float) - 0.5) / 24.0
    return 1.0 - 0.5 * np.cos(phase) - 0.3 * np.cos(2 * phase)


def synth_traffic(stations=3, days=30, seed=0, noise=1.0, weekly=0.2, base=400.0,
                  start=DEFAULT_START, sensor_noise=0.04, drift_shock=0.02, event_rate=0.004,
                  day_spread=0.05):
    """Synthetic 15-minute flows for a small corridor of stations.

    Every station sees one shared latent demand: a two-peak daily profile,
    weekend days lowered by the fraction ``weekly``, a random demand level
    per day (relative spread ``day_spread``), a slow AR(1) drift and
    occasional congestion drops. Station 0 is the downstream target and
    trails the others by one step, so a neighbour's value at ``t - 1``
    carries the target's latent at ``t``. Each station adds independent
    sensor noise. ``noise`` scales every random ingredient; ``noise=0``
    with ``weekly=0`` gives an exactly 96-periodic signal.
    """
    if stations < 1 or days < 1:
        raise InvalidInputError("stations and days must be >= 1")
    n = days * SAMPLES_PER_DAY
    lags = [1] + [0] * (stations - 1)
    pad = max(lags)
    rng = np.random.default_rng([int(seed), 7])
    t = np.arange(n + pad) - pad
    hour = (t % SAMPLES_PER_DAY) * 24.0 / SAMPLES_PER_DAY
    day = np.floor_divide(t, SAMPLES_PER_DAY)
    weekend = np.isin(np.mod(day, 7), (5, 6))
    latent = base * daily_profile(hour) * np.where(weekend, 1.0 - weekly, 1.0)

    drift = np.zeros(n + pad)
    if noise > 0:
        levels = 1.0 + day_spread * rng.standard_normal(day.max() - day.min() + 1)
        latent = latent * levels[day - day.min()]
        shocks = rng.standard_normal(n + pad) * drift_shock
        for i in range(1, n + pad):
            drift[i] = 0.985 * drift[i - 1] + shocks[i]
        latent = latent * (1.0 + noise * drift)
        events = np.flatnonzero(rng.random(n + pad) < event_rate)
        for e in events:
            length = int(rng.integers(2, 7))
            depth = noise * rng.uniform(0.25, 0.5)
            latent[e:e + length] *= 1.0 - depth

    out = []
    for k in range(stations):
        lag = lags[k]
        scale = 1.0 if k == 0 else float(1.0 + 0.1 * rng.uniform(-1, 1))
        own = rng.standard_normal(n) * base * sensor_noise * noise
        values = scale * latent[pad - lag: pad - lag + n] + own
        values = np.maximum(values, 0.0)
        out.append(StationSeries(f"S{k}", TimeSeries(values, start, DEFAULT_STEP), []))
    for k in range(1, stations):
        out[0].neighbors.append(f"S{k}")
        out[k].neighbors.append("S0")
    return out
