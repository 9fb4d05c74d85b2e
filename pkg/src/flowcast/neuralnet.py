"""A small LSTM regressor written directly in numpy.

The network reads a window of feature vectors and emits one scalar from the
last hidden state. Gates are stacked in the order forget, input, output,
candidate inside a single ``(4H, D + H)`` weight matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateScalerError,
    DivergenceError,
    EmptyDatasetError,
    InvalidInputError,
)

CHECKPOINT_FORMAT = "flowcast-lstm"
CHECKPOINT_VERSION = 1


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class MinMaxScaler:
    """Per-feature min-max scaling to [0, 1]."""

    low: np.ndarray
    high: np.ndarray

    @classmethod
    def fit(cls, values):
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        low, high = v.min(axis=0), v.max(axis=0)
        if np.any(high <= low):
            raise DegenerateScalerError("cannot min-max scale a constant feature")
        return cls(low, high)

    def transform(self, values, feature=None):
        v = np.asarray(values, dtype=float)
        if feature is not None:
            return (v - self.low[feature]) / (self.high[feature] - self.low[feature])
        return (v - self.low) / (self.high - self.low)

    def inverse(self, values, feature=0):
        v = np.asarray(values, dtype=float)
        return v * (self.high[feature] - self.low[feature]) + self.low[feature]

    def to_dict(self):
        return {"min": self.low.tolist(), "max": self.high.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["min"], dtype=float), np.asarray(d["max"], dtype=float))


@dataclass
class WindowDataset:
    """Scaled sliding windows; ``target_index`` points into the source series."""

    inputs: np.ndarray
    targets: np.ndarray
    window: int
    horizon: int
    scaler: MinMaxScaler
    target_index: np.ndarray

    def __len__(self):
        return self.targets.size

    def subset(self, idx):
        return WindowDataset(
            self.inputs[idx], self.targets[idx], self.window, self.horizon,
            self.scaler, self.target_index[idx],
        )


def make_windows(series, window=3, horizon=1, scaler=None, targets_from=0, targets_to=None):
    """Build stride-1 windows whose target lies ``horizon`` steps past the window.

    ``series`` is 1-D or ``(n, features)``; the target is always feature 0.
    When ``scaler`` is None it is fitted on the whole of ``series``, so pass
    only the training portion in that case. ``targets_from``/``targets_to``
    restrict which target indices are kept, letting test windows reach back
    into training history.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if window < 1 or horizon < 1:
        raise InvalidInputError("window and horizon must be >= 1")
    n = x.shape[0]
    first = window + horizon - 1
    stop = n if targets_to is None else min(n, targets_to)
    start = max(first, targets_from)
    if window >= n or start >= stop:
        raise EmptyDatasetError(f"no windows: length {n}, window {window}, horizon {horizon}")
    scaler = scaler or MinMaxScaler.fit(x)
    scaled = scaler.transform(x)
    target_index = np.arange(start, stop)
    offsets = np.arange(window) - (window + horizon - 1)
    inputs = scaled[target_index[:, None] + offsets[None, :]]
    return WindowDataset(inputs, scaled[target_index, 0], window, horizon, scaler, target_index)


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 1024
    epochs: int = 200
    seed: int = 0
    clip_norm: float = 5.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")
        if self.epochs < 0:
            raise InvalidInputError("epochs must be >= 0")


@dataclass
class LstmModel:
    input_dim: int
    hidden_dim: int
    W: np.ndarray
    b: np.ndarray
    W_y: np.ndarray
    b_y: float
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @classmethod
    def init(cls, input_dim=1, hidden_dim=32, seed=0):
        if input_dim < 1 or hidden_dim < 1:
            raise InvalidInputError("dimensions must be positive")
        rng = np.random.default_rng(seed)
        bound = 1.0 / math.sqrt(hidden_dim)
        h4, cols = 4 * hidden_dim, input_dim + hidden_dim
        return cls(
            input_dim, hidden_dim,
            rng.uniform(-bound, bound, (h4, cols)),
            rng.uniform(-bound, bound, h4),
            rng.uniform(-bound, bound, hidden_dim),
            float(rng.uniform(-bound, bound)),
            seed,
        )

    @classmethod
    def zeros(cls, input_dim=1, hidden_dim=1):
        h = hidden_dim
        return cls(input_dim, h, np.zeros((4 * h, input_dim + h)), np.zeros(4 * h), np.zeros(h), 0.0)

    def _gate(self, k):
        h = self.hidden_dim
        return slice(k * h, (k + 1) * h)

    # per-gate views onto the stacked parameters
    W_f = property(lambda self: self.W[self._gate(0)])
    W_i = property(lambda self: self.W[self._gate(1)])
    W_o = property(lambda self: self.W[self._gate(2)])
    W_g = property(lambda self: self.W[self._gate(3)])
    b_f = property(lambda self: self.b[self._gate(0)])
    b_i = property(lambda self: self.b[self._gate(1)])
    b_o = property(lambda self: self.b[self._gate(2)])
    b_g = property(lambda self: self.b[self._gate(3)])

    def copy(self):
        return LstmModel(
            self.input_dim, self.hidden_dim, self.W.copy(), self.b.copy(),
            self.W_y.copy(), float(self.b_y), self.seed, dict(self.meta),
        )

    def params(self):
        return {"W": self.W, "b": self.b, "W_y": self.W_y, "b_y": np.array([self.b_y])}

    def check(self):
        h, d = self.hidden_dim, self.input_dim
        if self.W.shape != (4 * h, d + h) or self.b.shape != (4 * h,) or self.W_y.shape != (h,):
            raise InvalidInputError("inconsistent LSTM parameter shapes")
        if not all(np.all(np.isfinite(p)) for p in self.params().values()):
            raise InvalidInputError("LSTM parameters must be finite")

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "seed": self.seed,
            "W": self.W.tolist(),
            "b": self.b.tolist(),
            "W_y": self.W_y.tolist(),
            "b_y": self.b_y,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        model = cls(
            int(d["input_dim"]), int(d["hidden_dim"]),
            np.asarray(d["W"], dtype=float), np.asarray(d["b"], dtype=float),
            np.asarray(d["W_y"], dtype=float), float(d["b_y"]),
            int(d.get("seed", 0)), dict(d.get("meta", {})),
        )
        model.check()
        return model


def _forward(model, inputs):
    """Batched forward pass over ``inputs`` of shape (B, T, D)."""
    bsz, steps, _ = inputs.shape
    hd = model.hidden_dim
    h = np.zeros((bsz, hd))
    c = np.zeros((bsz, hd))
    cache = []
    for t in range(steps):
        xh = np.concatenate((inputs[:, t, :], h), axis=1)
        z = xh @ model.W.T + model.b
        f = _sigmoid(z[:, :hd])
        i = _sigmoid(z[:, hd:2 * hd])
        o = _sigmoid(z[:, 2 * hd:3 * hd])
        g = np.tanh(z[:, 3 * hd:])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        cache.append((xh, f, i, o, g, c_prev, tc))
    y = h @ model.W_y + model.b_y
    return y, h, cache


def _backward(model, inputs, targets):
    """MSE loss and its gradient by backpropagation through time."""
    y, h_last, cache = _forward(model, inputs)
    bsz = targets.size
    err = y - targets
    loss = float(np.mean(err ** 2))
    dy = 2.0 * err / bsz
    hd, d = model.hidden_dim, model.input_dim
    grads = {
        "W": np.zeros_like(model.W),
        "b": np.zeros_like(model.b),
        "W_y": h_last.T @ dy,
        "b_y": np.array([dy.sum()]),
    }
    dh = np.outer(dy, model.W_y)
    dc = np.zeros_like(dh)
    for xh, f, i, o, g, c_prev, tc in reversed(cache):
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc ** 2)
        dz = np.concatenate(
            (
                dc * c_prev * f * (1.0 - f),
                dc * g * i * (1.0 - i),
                do * o * (1.0 - o),
                dc * i * (1.0 - g ** 2),
            ),
            axis=1,
        )
        grads["W"] += dz.T @ xh
        grads["b"] += dz.sum(axis=0)
        dh = (dz @ model.W)[:, d:]
        dc = dc * f
    return loss, grads


def _as_batch(model, sequence):
    x = np.asarray(sequence, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1] < 1 or x.shape[2] != model.input_dim:
        raise InvalidInputError(
            f"expected (steps, {model.input_dim}) input, got shape {np.shape(sequence)}"
        )
    return x


def lstm_forward(model, sequence):
    """Predict one scalar from a ``(steps, input_dim)`` sequence; h0 = c0 = 0."""
    y, _, _ = _forward(model, _as_batch(model, sequence))
    return float(y[0])


def lstm_hidden_states(model, sequence):
    """Hidden and cell states after every step of a single sequence."""
    _, _, cache = _forward(model, _as_batch(model, sequence))
    hs, cs = [], []
    for _, f, i, o, g, c_prev, tc in cache:
        cs.append(f * c_prev + i * g)
        hs.append(o * tc)
    return np.vstack(hs), np.vstack(cs)


def lstm_predict(model, inputs):
    """Vectorised forward pass over ``(samples, steps, input_dim)``."""
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 3 or x.shape[2] != model.input_dim:
        raise InvalidInputError("inputs must be (samples, steps, input_dim)")
    if x.shape[0] == 0:
        return np.zeros(0)
    y, _, _ = _forward(model, x)
    return y


def mse(model, data):
    return float(np.mean((lstm_predict(model, data.inputs) - data.targets) ** 2))


def lstm_train(model, data, config):
    """Mini-batch gradient descent with global-norm clipping.

    The batch size is capped at the dataset size. Returns a trained copy and
    the per-epoch mean training loss.
    """
    if len(data) == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    model = model.copy()
    model.check()
    if data.inputs.shape[2] != model.input_dim:
        raise InvalidInputError("dataset feature count does not match model input_dim")
    history = []
    if config.epochs == 0:
        return model, history
    rng = np.random.default_rng(config.seed)
    n = len(data)
    batch = min(config.batch_size, n)
    lr = config.learning_rate
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            loss, grads = _backward(model, data.inputs[idx], data.targets[idx])
            if not math.isfinite(loss):
                raise DivergenceError(epoch, loss)
            total += loss * idx.size
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            scale = lr * min(1.0, config.clip_norm / norm) if norm > 0 else lr
            model.W -= scale * grads["W"]
            model.b -= scale * grads["b"]
            model.W_y -= scale * grads["W_y"]
            model.b_y -= scale * float(grads["b_y"][0])
        epoch_loss = total / n
        if not math.isfinite(epoch_loss):
            raise DivergenceError(epoch, epoch_loss)
        history.append(epoch_loss)
    return model, history


def gradient_check(model, sample, step=1e-5, floor=1e-6):
    """Largest relative gap between BPTT and central-difference gradients.

    The relative error of each parameter is ``|a - n| / max(|a| + |n|, floor)``
    so entries whose true gradient is numerically zero are judged on an
    absolute scale.
    """
    inputs, target = sample
    x = _as_batch(model, inputs)
    t = np.atleast_1d(np.asarray(target, dtype=float))
    _, grads = _backward(model, x, t)
    probe = model.copy()
    worst = 0.0
    for name, value in probe.params().items():
        analytic = grads[name].ravel()
        for k in range(value.size):
            numeric = (
                _perturbed_loss(probe, name, k, step, x, t)
                - _perturbed_loss(probe, name, k, -step, x, t)
            ) / (2 * step)
            a = analytic[k]
            rel = abs(a - numeric) / max(abs(a) + abs(numeric), floor)
            worst = max(worst, rel)
    return worst


def _perturbed_loss(model, name, k, delta, x, t):
    if name == "b_y":
        saved = model.b_y
        model.b_y = saved + delta
        y, _, _ = _forward(model, x)
        model.b_y = saved
    else:
        arr = getattr(model, name).reshape(-1)
        saved = arr[k]
        arr[k] = saved + delta
        y, _, _ = _forward(model, x)
        arr[k] = saved
    return float(np.mean((y - t) ** 2))


def save_checkpoint(path, model, scaler=None, window=None, extra=None):
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model": model.to_dict(),
        "scaler": scaler.to_dict() if scaler is not None else None,
        "window": window,
    }
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise InvalidInputError(f"{path} is not a flowcast checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint version {payload.get('version')}")
    scaler = MinMaxScaler.from_dict(payload["scaler"]) if payload.get("scaler") else None
    return LstmModel.from_dict(payload["model"]), scaler, payload
