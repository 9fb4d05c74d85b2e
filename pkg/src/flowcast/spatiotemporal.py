"""Neighbour-aware correction of the low-frequency component.

Two forecasters run side by side over the test span: a univariate GWO-tuned
LSTM and a "spatiotemporal" LSTM whose input windows also carry the
neighbouring stations' low-frequency components at the same timestamps
(i.e. one step before the predicted instant). At each step the emitted value
comes from whichever source had the smaller absolute error, measured in the
target's scaled units, at the previous step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decomposition import TimeSeries
from .entropy import ComponentSet
from .errors import AlignmentError, InvalidInputError
from .neuralnet import LstmModel, MinMaxScaler, lstm_predict, make_windows

GWO_LSTM = 1
SPATIOTEMPORAL = 2


@dataclass
class StationSeries:
    station_id: str
    series: TimeSeries
    neighbors: list = field(default_factory=list)


@dataclass
class DualPrediction:
    y_hat_1: float
    y_hat_2: float
    chosen: int
    err_prev: tuple

    @property
    def value(self):
        return self.y_hat_1 if self.chosen == GWO_LSTM else self.y_hat_2


@dataclass
class Forecaster:
    """An LSTM bundled with the scaler and window it was trained with."""

    model: LstmModel
    scaler: MinMaxScaler
    window: int = 3
    horizon: int = 1

    def predict(self, features, targets_from, targets_to=None):
        """Unscaled predictions for target indices in ``[targets_from, targets_to)``."""
        data = make_windows(features, self.window, self.horizon, self.scaler, targets_from, targets_to)
        return self.scaler.inverse(lstm_predict(self.model, data.inputs)), data.target_index


@dataclass
class SpatialWalk:
    predictions: np.ndarray
    trace: list
    target_index: np.ndarray

    @property
    def chosen(self):
        return np.array([d.chosen for d in self.trace])


def extract_low_frequency(components):
    """The lowest-entropy component with the residue folded in."""
    if not isinstance(components, ComponentSet) or len(components) == 0:
        raise InvalidInputError("need a non-empty ComponentSet")
    idx = components.low_frequency_index()
    return components.components[idx] + components.residue


def select_source(err_prev_1, err_prev_2):
    """Source with the strictly smaller previous error; ties keep the GWO-LSTM."""
    return SPATIOTEMPORAL if err_prev_2 < err_prev_1 else GWO_LSTM


def check_alignment(target, neighbors):
    """Raise unless every neighbour shares the target's start, step and length."""
    for nb in neighbors:
        s, t = nb.series, target.series
        if s.start_time != t.start_time or s.step != t.step or len(s) != len(t):
            raise AlignmentError(
                f"station {nb.station_id} is not aligned with target {target.station_id}"
            )


def stack_features(target_low, neighbor_lows):
    target_low = np.asarray(target_low, dtype=float)
    cols = [target_low]
    for nb in neighbor_lows:
        nb = np.asarray(nb, dtype=float)
        if nb.shape != target_low.shape:
            raise AlignmentError(
                f"neighbour component length {nb.size} != target length {target_low.size}"
            )
        cols.append(nb)
    return np.column_stack(cols)


def predict_low_frequency(target_low, neighbor_lows, gwo_lstm, st_lstm, start, horizon_steps):
    """Walk ``horizon_steps`` one-step forecasts starting at index ``start``.

    ``gwo_lstm`` and ``st_lstm`` are :class:`Forecaster` instances; the second
    reads ``[target, neighbours...]`` feature windows. Without neighbours (or
    without a spatiotemporal model) the output is the GWO-LSTM forecast.
    """
    target_low = np.asarray(target_low, dtype=float)
    neighbor_lows = [] if neighbor_lows is None else list(neighbor_lows)
    features = stack_features(target_low, neighbor_lows)
    stop = start + horizon_steps
    if horizon_steps < 1 or stop > target_low.size:
        raise InvalidInputError("horizon runs past the end of the series")
    y1, index = gwo_lstm.predict(target_low, start, stop)
    if neighbor_lows and st_lstm is not None:
        y2, _ = st_lstm.predict(features, start, stop)
    else:
        y2 = y1.copy()

    scale = gwo_lstm.scaler
    actual = scale.transform(target_low[index], 0)
    e1 = np.abs(scale.transform(y1, 0) - actual)
    e2 = np.abs(scale.transform(y2, 0) - actual)
    out = np.empty(horizon_steps)
    trace = []
    for s in range(horizon_steps):
        if s == 0:
            err_prev = (float("nan"), float("nan"))
            chosen = GWO_LSTM
        else:
            err_prev = (float(e1[s - 1]), float(e2[s - 1]))
            chosen = select_source(*err_prev)
        d = DualPrediction(float(y1[s]), float(y2[s]), chosen, err_prev)
        trace.append(d)
        out[s] = d.value
    return SpatialWalk(out, trace, index)
