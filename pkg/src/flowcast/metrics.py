"""Forecast error metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass
class MetricsReport:
    """Error summary. ``mape`` is a fraction (0.1 == 10 %) and is None when
    every actual value is zero; ``r2`` is None when the actuals are constant
    and the fit is imperfect."""

    n: int
    sse: float
    mae: float
    mse: float
    rmse: float
    mape: float | None
    mape_excluded: int
    r2: float | None

    def to_dict(self):
        return asdict(self)


def compute_metrics(actual, predicted):
    y = np.asarray(actual, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if y.size != p.size:
        raise InvalidInputError(f"length mismatch: {y.size} actual vs {p.size} predicted")
    if y.size == 0:
        raise InvalidInputError("cannot score empty series")
    err = p - y
    n = y.size
    sse = float(np.sum(err * err))
    mse = sse / n
    nonzero = y != 0
    excluded = int(n - np.count_nonzero(nonzero))
    mape = float(np.mean(np.abs(err[nonzero]) / np.abs(y[nonzero]))) if excluded < n else None
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - sse / ss_tot
    else:
        r2 = 1.0 if sse == 0 else None
    return MetricsReport(
        n=n,
        sse=sse,
        mae=float(np.mean(np.abs(err))),
        mse=mse,
        rmse=math.sqrt(mse),
        mape=mape,
        mape_excluded=excluded,
        r2=r2,
    )


def aggregate_components(component_predictions):
    """Element-wise sum of per-component forecasts."""
    arrays = [np.asarray(c, dtype=float) for c in component_predictions]
    if not arrays:
        raise InvalidInputError("no components to aggregate")
    if len({a.shape for a in arrays}) != 1:
        raise InvalidInputError("component predictions differ in length")
    return np.sum(arrays, axis=0)
