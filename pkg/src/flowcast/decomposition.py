"""Empirical mode decomposition and its noise-assisted variants.

Three decompositions are provided, all returning an :class:`ImfSet` whose
modes are ordered from high to low frequency:

* :func:`emd` -- plain sifting with cubic-spline envelopes;
* :func:`eemd` -- ensemble EMD, averaging over white-noise realizations;
* :func:`ceemdan` -- complete ensemble EMD with adaptive noise, which extracts
  one mode per stage from a noise-perturbed running residue and is exactly
  complete.

Every realization draws from its own generator keyed on
``(master_seed, realization)``, so results do not depend on evaluation order
or on the number of worker processes.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateInputError, InvalidInputError

logger = logging.getLogger(__name__)

DEFAULT_STEP = timedelta(minutes=15)
DEFAULT_START = datetime(2000, 1, 1)


@dataclass
class TimeSeries:
    """Uniformly sampled scalar series."""

    values: np.ndarray
    start_time: datetime = DEFAULT_START
    step: timedelta = DEFAULT_STEP

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 2:
            raise InvalidInputError("a TimeSeries needs at least 2 samples")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("TimeSeries values must be finite")
        if self.step <= timedelta(0):
            raise InvalidInputError("step must be positive")

    def __len__(self):
        return self.values.size

    @property
    def times(self):
        return [self.start_time + i * self.step for i in range(len(self))]

    def with_values(self, values):
        return TimeSeries(values, self.start_time, self.step)


@dataclass
class ImfSet:
    """Intrinsic mode functions (rows of ``imfs``) plus the final residue."""

    imfs: np.ndarray
    residue: np.ndarray

    def __post_init__(self):
        self.residue = np.asarray(self.residue, dtype=float)
        imfs = np.asarray(self.imfs, dtype=float)
        if imfs.size == 0:
            imfs = np.zeros((0, self.residue.size))
        if imfs.ndim != 2 or imfs.shape[1] != self.residue.size:
            raise InvalidInputError(
                f"imf shape {imfs.shape} does not match residue length {self.residue.size}"
            )
        self.imfs = imfs

    def __len__(self):
        return self.imfs.shape[0]


@dataclass(frozen=True)
class EmdConfig:
    """Decomposition settings.

    ``noise_std`` is in the units of the input signal when ``noise_mode`` is
    ``"absolute"``; with ``"relative"`` it is a multiple of the input's
    standard deviation.
    """

    noise_std: float = 2000.0
    realizations: int = 500
    max_sift_iterations: int = 2000
    sift_stop_threshold: float = 0.2
    master_seed: int = 0
    noise_mode: str = "absolute"
    ceemdan_variant: str = "classic"
    workers: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.realizations < 1:
            raise InvalidInputError("realizations must be >= 1")
        if self.max_sift_iterations < 1:
            raise InvalidInputError("max_sift_iterations must be >= 1")
        if self.noise_std < 0:
            raise InvalidInputError("noise_std must be >= 0")
        if self.noise_mode not in ("absolute", "relative"):
            raise InvalidInputError(f"unknown noise_mode {self.noise_mode!r}")
        if self.ceemdan_variant not in ("improved", "classic"):
            raise InvalidInputError(f"unknown ceemdan_variant {self.ceemdan_variant!r}")

    def noise_amplitude(self, x):
        if self.noise_mode == "relative":
            return self.noise_std * float(np.std(x))
        return float(self.noise_std)


def _values(series):
    if isinstance(series, TimeSeries):
        return series.values
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise InvalidInputError("expected a one-dimensional series")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("series contains non-finite values")
    return x


def find_extrema(series):
    """Indices of strict interior local maxima and minima.

    A flat run bounded by lower (higher) neighbours on both sides counts as a
    single maximum (minimum) located at the run's midpoint. Runs touching
    either end of the series are never extrema.

    Returns
    -------
    (maxima, minima) : tuple of int ndarrays
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise DegenerateInputError("find_extrema needs at least 3 samples")
    change = np.flatnonzero(np.diff(x) != 0)
    starts = np.concatenate(([0], change + 1))
    ends = np.concatenate((change, [x.size - 1]))
    if starts.size < 3:
        empty = np.zeros(0, dtype=int)
        return empty, empty.copy()
    d = np.diff(x[starts])
    is_max = (d[:-1] > 0) & (d[1:] < 0)
    is_min = (d[:-1] < 0) & (d[1:] > 0)
    mids = (starts[1:-1] + ends[1:-1]) // 2
    return mids[is_max], mids[is_min]


def _envelope(x, idx, grid):
    # two extrema on each side are reflected about the series ends
    n = x.size
    left = idx[:2][::-1]
    right = idx[-2:][::-1]
    knots = np.concatenate((-left, idx, 2 * (n - 1) - right))
    vals = np.concatenate((x[left], x[idx], x[right]))
    return CubicSpline(knots, vals)(grid)


def _has_enough_extrema(x, need=2):
    if x.size < 3:
        return False
    maxima, minima = find_extrema(x)
    return maxima.size >= need and minima.size >= need


def _sift(x, max_iterations, threshold):
    """Extract one IMF from ``x`` by repeated envelope-mean subtraction."""
    grid = np.arange(x.size, dtype=float)
    h = x.copy()
    for _ in range(max_iterations):
        maxima, minima = find_extrema(h)
        if maxima.size < 2 or minima.size < 2:
            break
        mean = 0.5 * (_envelope(h, maxima, grid) + _envelope(h, minima, grid))
        h_next = h - mean
        denom = np.dot(h, h)
        sd = np.dot(mean, mean) / denom if denom > 0 else 0.0
        h = h_next
        if sd < threshold:
            break
    return h


def _emd_array(x, config, max_imfs=None):
    limit = x.size if max_imfs is None else max_imfs
    residue = x.copy()
    imfs = []
    while len(imfs) < limit and _has_enough_extrema(residue):
        imf = _sift(residue, config.max_sift_iterations, config.sift_stop_threshold)
        imfs.append(imf)
        residue = residue - imf
    if imfs:
        return np.vstack(imfs), residue
    return np.zeros((0, x.size)), residue


def emd(series, config=None):
    """Empirical mode decomposition by cubic-spline sifting.

    A series with fewer than two maxima or two minima is returned whole as
    the residue.
    """
    config = config or EmdConfig()
    x = _values(series)
    imfs, residue = _emd_array(x, config)
    return ImfSet(imfs, residue)


def _rng(seed, realization):
    return np.random.default_rng([int(seed), int(realization)])


def _white_noise(seed, realization, n):
    return _rng(seed, realization).standard_normal(n)


def _eemd_trial(args):
    x, amplitude, config, i = args
    noise = amplitude * _white_noise(config.master_seed, i, x.size)
    imfs, residue = _emd_array(x + noise, config)
    return imfs, residue, noise


def _noise_modes(args):
    n, config, i = args
    imfs, _ = _emd_array(_white_noise(config.master_seed, i, n), config)
    return imfs


def _map(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(job) for job in jobs]


def _pad(stack, k, n):
    if stack.shape[0] >= k:
        return stack[:k]
    return np.vstack((stack, np.zeros((k - stack.shape[0], n))))


def eemd(series, config=None):
    """Ensemble EMD: average each mode over noise-perturbed realizations.

    Realizations with fewer modes are padded with zero modes. The averaged
    added noise is subtracted from the averaged residue, so the result stays
    complete; with ``noise_std == 0`` and one realization this is exactly
    :func:`emd`.
    """
    config = config or EmdConfig()
    x = _values(series)
    amplitude = config.noise_amplitude(x)
    trials = _map(
        _eemd_trial,
        [(x, amplitude, config, i) for i in range(config.realizations)],
        config.workers,
    )
    k = max(t[0].shape[0] for t in trials)
    imf_sum = np.zeros((k, x.size))
    residue_sum = np.zeros(x.size)
    noise_sum = np.zeros(x.size)
    for imfs, residue, noise in trials:
        imf_sum += _pad(imfs, k, x.size)
        residue_sum += residue
        noise_sum += noise
    r = config.realizations
    return ImfSet(imf_sum / r, residue_sum / r - noise_sum / r)


def _first_modes(args):
    residue, noise_stage, scales, local_mean, config = args
    out = np.empty_like(noise_stage)
    for j, w in enumerate(noise_stage):
        y = residue + scales[j] * w
        mode = _sift(y, config.max_sift_iterations, config.sift_stop_threshold)
        out[j] = y - mode if local_mean else mode
    return out


def ceemdan(series, config=None):
    """Complete ensemble EMD with adaptive noise.

    Two stage rules are available through ``config.ceemdan_variant``.

    ``"improved"`` averages local means. Stage k perturbs the
    running residue ``r_{k-1}`` with ``E_k(w_i)``, the k-th EMD mode of the
    i-th white-noise realization, takes the local mean (input minus first
    mode) of each perturbed copy and averages them into ``r_k``; the IMF is
    ``r_{k-1} - r_k``. Stage 1 scales each ``E_1(w_i)`` to the configured
    noise amplitude, later stages shrink it in proportion to ``std(r_k)``.
    Averaging local means rather than first modes keeps leftover noise and
    spurious early modes out of the result.

    ``"classic"`` (default) averages the first mode of ``x + eps * w_i`` at stage 1
    and of ``r_{k-1} + eps * E_{k-1}(w_i)`` afterwards, with a constant eps.

    Realizations with fewer noise modes contribute zero perturbation. Stages
    stop once the running residue has fewer than two maxima or minima. The
    residue is ``x`` minus the extracted modes, so reconstruction is exact
    up to rounding.
    """
    config = config or EmdConfig()
    x = _values(series)
    n = x.size
    amplitude = config.noise_amplitude(x)
    realizations = config.realizations
    improved = config.ceemdan_variant == "improved"
    if not _has_enough_extrema(x):
        return ImfSet(np.zeros((0, n)), x.copy())

    noise = np.vstack([_white_noise(config.master_seed, i, n) for i in range(realizations)])
    if amplitude > 0:
        modes = _map(_noise_modes, [(n, config, i) for i in range(realizations)], config.workers)
    else:
        modes = [np.zeros((0, n)) for _ in range(realizations)]

    def noise_mode(k):
        # k = 0 is the raw noise, k >= 1 the k-th EMD mode of it
        if k == 0:
            return noise
        return np.vstack([m[k - 1] if m.shape[0] >= k else np.zeros(n) for m in modes])

    x_std = float(np.std(x))
    imfs = []
    residue = x.copy()
    chunks = max(1, config.workers)
    while _has_enough_extrema(residue) and len(imfs) < n:
        k = len(imfs)
        if improved:
            w = noise_mode(k + 1)
            if k == 0:
                spread = np.std(w, axis=1)
                scales = np.divide(amplitude, spread, out=np.zeros(realizations), where=spread > 0)
            else:
                scales = np.full(realizations, amplitude * float(np.std(residue)) / x_std)
        else:
            w = noise_mode(k)
            scales = np.full(realizations, amplitude)
        parts = np.array_split(np.arange(realizations), chunks)
        jobs = [(residue, w[p], scales[p], improved, config) for p in parts if p.size]
        averaged = np.vstack(_map(_first_modes, jobs, config.workers)).mean(axis=0)
        if improved:
            imf = residue - averaged
            residue = averaged
        else:
            imf = averaged
            residue = residue - imf
        imfs.append(imf)
        logger.debug("ceemdan stage %d done", len(imfs))
    residue = x - np.sum(imfs, axis=0)
    return ImfSet(np.vstack(imfs), residue)


def reconstruct(imfs):
    """Element-wise sum of every mode and the residue."""
    if not isinstance(imfs, ImfSet):
        raise InvalidInputError("reconstruct expects an ImfSet")
    if imfs.imfs.shape[0] == 0 and imfs.residue.size == 0:
        raise InvalidInputError("empty ImfSet")
    if imfs.imfs.shape[1] != imfs.residue.size:
        raise InvalidInputError("imf and residue lengths differ")
    return imfs.imfs.sum(axis=0) + imfs.residue


DECOMPOSERS = {"emd": emd, "eemd": eemd, "ceemdan": ceemdan}


def decompose(series, method="ceemdan", config=None):
    try:
        fn = DECOMPOSERS[method]
    except KeyError:
        raise InvalidInputError(f"unknown decomposition method {method!r}") from None
    return fn(series, config)
