"""End-to-end forecasting run and its model-variant ablations.

Variants, in the order they are reported:

``lstm``
    untuned LSTM on the raw series (learning rate 0.01, batch 1024);
``gwo_lstm``
    GWO-tuned LSTM on the raw series;
``ceemdan_se_gwo_lstm``
    decomposition, entropy regrouping and one GWO-tuned LSTM per component,
    summed;
``full``
    as above with the low-frequency component corrected from neighbouring
    stations.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import clean_series, split_train_test
from .decomposition import EmdConfig, ImfSet, TimeSeries, decompose
from .entropy import DEFAULT_BAND_EDGES, SampEnParams, assign_band, imf_entropies, recombine_by_entropy
from .errors import FlowcastError, InvalidInputError, StageError
from .gwo import Dim, SearchSpace, default_lstm_space, tune_lstm
from .metrics import aggregate_components, compute_metrics
from .neuralnet import LstmModel, TrainConfig, lstm_predict, lstm_train, make_windows
from .spatiotemporal import (
    Forecaster,
    check_alignment,
    extract_low_frequency,
    predict_low_frequency,
    stack_features,
)

logger = logging.getLogger(__name__)

VARIANTS = ("lstm", "gwo_lstm", "ceemdan_se_gwo_lstm", "full")


@dataclass
class PipelineConfig:
    emd: EmdConfig = field(default_factory=lambda: EmdConfig(
        noise_std=0.2, noise_mode="relative", realizations=50, ceemdan_variant="improved"))
    method: str = "ceemdan"
    sampen: SampEnParams = field(default_factory=SampEnParams)
    band_edges: tuple = DEFAULT_BAND_EDGES
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden_dim: int = 32
    window: int = 3
    space: SearchSpace = field(default_factory=default_lstm_space)
    gwo_iterations: int = 5
    pack_size: int = 6
    warm_epochs: int = 40
    val_fraction: float = 0.2
    split_ratio: float = 0.8
    spatial: bool = True
    strict: bool = False
    strict_method: str = "emd"
    strict_history: int = 384
    target: str | None = None
    variants: tuple = VARIANTS
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.split_ratio <= 1:
            raise InvalidInputError("split_ratio must lie in (0, 1]")
        if not 0 < self.val_fraction < 1:
            raise InvalidInputError("val_fraction must lie in (0, 1)")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown:
            raise InvalidInputError(f"unknown variants {sorted(unknown)}")


def _bool(text):
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def parse_space(text):
    """``name:low:high[:int]`` entries separated by commas."""
    dims = []
    for item in text.split(","):
        parts = [p.strip() for p in item.strip().split(":")]
        if len(parts) not in (3, 4):
            raise InvalidInputError(f"bad search-space entry {item!r}")
        dims.append(Dim(parts[0], float(parts[1]), float(parts[2]),
                        len(parts) == 4 and parts[3] == "int"))
    return SearchSpace(dims)


def load_config(path):
    """Read a :class:`PipelineConfig` from an INI-style key = value file.

    Sections are ``[pipeline]``, ``[decomposition]``, ``[entropy]``,
    ``[train]`` and ``[gwo]``; any missing key keeps its default.
    """
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise InvalidInputError(f"cannot read config {path}")
    cfg = PipelineConfig()
    kw = {}
    if cp.has_section("pipeline"):
        s = cp["pipeline"]
        for key, conv in (("seed", int), ("split_ratio", float), ("window", int),
                          ("hidden_dim", int), ("workers", int), ("strict_history", int)):
            if key in s:
                kw[key] = conv(s[key])
        for key in ("spatial", "strict"):
            if key in s:
                kw[key] = _bool(s[key])
        if "target" in s:
            kw["target"] = s["target"].strip() or None
        if "strict_method" in s:
            kw["strict_method"] = s["strict_method"].strip()
        if "variants" in s:
            kw["variants"] = tuple(v.strip() for v in s["variants"].split(",") if v.strip())
    if cp.has_section("decomposition"):
        s = cp["decomposition"]
        emd_kw = {}
        for key, conv in (("noise_std", float), ("realizations", int), ("max_sift_iterations", int),
                          ("sift_stop_threshold", float), ("master_seed", int), ("workers", int)):
            if key in s:
                emd_kw[key] = conv(s[key])
        for key in ("noise_mode", "ceemdan_variant"):
            if key in s:
                emd_kw[key] = s[key].strip()
        kw["emd"] = replace(cfg.emd, **emd_kw)
        if "method" in s:
            kw["method"] = s["method"].strip()
    if cp.has_section("entropy"):
        s = cp["entropy"]
        kw["sampen"] = SampEnParams(int(s.get("m", 2)), float(s.get("r", 0.2)),
                                    _bool(s.get("relative", "true")))
        if "bands" in s:
            kw["band_edges"] = tuple(float(v) for v in s["bands"].split(","))
    if cp.has_section("train"):
        s = cp["train"]
        kw["train"] = TrainConfig(
            float(s.get("learning_rate", cfg.train.learning_rate)),
            int(s.get("batch_size", cfg.train.batch_size)),
            int(s.get("epochs", cfg.train.epochs)),
            int(s.get("seed", cfg.train.seed)),
            float(s.get("clip_norm", cfg.train.clip_norm)),
        )
    if cp.has_section("gwo"):
        s = cp["gwo"]
        for key, conv in (("pack_size", int), ("warm_epochs", int), ("val_fraction", float)):
            if key in s:
                kw[key] = conv(s[key])
        if "iterations" in s:
            kw["gwo_iterations"] = int(s["iterations"])
        if "space" in s:
            kw["space"] = parse_space(s["space"])
    return replace(cfg, **kw)


def derive_seed(master, *keys):
    return int(np.random.default_rng([int(master), *[int(k) for k in keys]]).integers(2**31 - 1))


def _digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=float)).tobytes())
    return h.hexdigest()[:16]


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        logger.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, (FlowcastError, ValueError, ArithmeticError)):
            raise StageError(self.name, exc) from exc
        return False


def fit_forecaster(features, n_train, config, seed, tune=True):
    """Train an LSTM on ``features[:n_train]``; feature 0 is the target."""
    features = np.asarray(features, dtype=float)
    data = make_windows(features[:n_train], config.window, 1)
    n = len(data)
    if tune:
        cut = max(1, int(round(n * (1 - config.val_fraction))))
        fit, val = data.subset(slice(0, cut)), data.subset(slice(cut, n))
        res = tune_lstm(fit, val, config.space, config.gwo_iterations, seed,
                        config.pack_size, config.warm_epochs, config.train)
        model = res.model
        model.meta["val_mse"] = res.val_mse
    else:
        model = LstmModel.init(data.inputs.shape[2], config.hidden_dim, seed=seed)
        model, _ = lstm_train(model, data, replace(config.train, seed=seed))
    return Forecaster(model, data.scaler, config.window)


@dataclass
class PipelineResult:
    reports: dict
    predictions: dict
    actual: np.ndarray
    test_times: list
    components: dict
    info: dict
    stage_hashes: dict
    walk: object = None

    def metrics_json(self):
        payload = {
            "metrics": {k: v.to_dict() for k, v in self.reports.items()},
            "info": self.info,
            "stage_hashes": self.stage_hashes,
        }
        return json.dumps(_jsonable(payload), sort_keys=True, indent=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def _decompose_components(x, config, seed):
    emd_cfg = replace(config.emd, master_seed=seed)
    imfs = decompose(x, config.method, emd_cfg)
    if len(imfs) == 0:
        raise InvalidInputError("series could not be decomposed (too few extrema)")
    return imfs, recombine_by_entropy(imfs, config.sampen, config.band_edges)


def _pick_target(stations, config):
    if config.target is None:
        return stations[0]
    for s in stations:
        if s.station_id == config.target:
            return s
    raise InvalidInputError(f"target station {config.target!r} not found")


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def run_pipeline(config, stations):
    """Clean, split, decompose, forecast, correct, aggregate and score.

    Returns a :class:`PipelineResult` with one metrics report per requested
    variant. Errors are re-raised as :class:`StageError` carrying the stage
    name.
    """
    if not stations:
        raise InvalidInputError("no stations supplied")
    target = _pick_target(stations, config)
    by_id = {s.station_id: s for s in stations}
    wanted = set(config.variants)
    hashes = {}
    info = {"target": target.station_id}

    with _Stage("clean"):
        cleaned = {s.station_id: clean_series(s.series) for s in stations}
        y = cleaned[target.station_id].values
    with _Stage("split"):
        train, test = split_train_test(y, config.split_ratio)
        n_train, n = train.size, y.size
        if test.size == 0:
            raise InvalidInputError("split leaves an empty test set")
        if n_train <= config.window + 1:
            raise InvalidInputError("training portion shorter than the window")
    base_hash = {"clean": _digest(y), "split": _digest([n_train, n])}
    series = cleaned[target.station_id]
    test_times = [series.start_time + i * series.step for i in range(n_train, n)]
    predictions = {}
    walk = None
    components_out = {}

    if "lstm" in wanted:
        with _Stage("lstm"):
            fc = fit_forecaster(y, n_train, config, derive_seed(config.seed, 1), tune=False)
            predictions["lstm"] = fc.predict(y, n_train, n)[0]
            hashes["lstm"] = {**base_hash, "model_input": _digest(y[:n_train])}
    if "gwo_lstm" in wanted:
        with _Stage("gwo_lstm"):
            fc = fit_forecaster(y, n_train, config, derive_seed(config.seed, 2))
            predictions["gwo_lstm"] = fc.predict(y, n_train, n)[0]
            info["gwo_lstm_hyperparameters"] = dict(fc.model.meta)
            hashes["gwo_lstm"] = {**base_hash, "model_input": _digest(y[:n_train])}

    decomposed = wanted & {"ceemdan_se_gwo_lstm", "full"}
    if decomposed:
        if config.strict:
            comp_preds, low_idx, comp_info, comp_hash, targets = _strict_components(
                y, n_train, config)
            low_forecaster = None
        else:
            with _Stage("decompose"):
                imfs, comps = _decompose_components(y, config, derive_seed(config.seed, 3))
                targets = comps.forecast_targets()
                low_idx = comps.low_frequency_index()
            comp_info = {
                "n_imfs": len(imfs),
                "entropies": comps.entropies.tolist(),
                "members": [[i + 1 for i in m] for m in comps.members],
                "low_frequency_component": low_idx + 1,
            }
            comp_hash = _digest(targets)

            def component_job(c):
                fc = fit_forecaster(targets[c], n_train, config, derive_seed(config.seed, 4, c))
                return fc, fc.predict(targets[c], n_train, n)[0]

            with _Stage("component_models"):
                fitted = _map(component_job, range(targets.shape[0]), config.workers)
            comp_preds = [p for _, p in fitted]
            comp_info["hyperparameters"] = [dict(fc.model.meta) for fc, _ in fitted]
            low_forecaster = fitted[low_idx][0]
        info.update(comp_info)
        names = [f"NEW{c + 1}" for c in range(len(comp_preds))]
        for c, name in enumerate(names):
            components_out[name] = {
                "series": targets[c],
                "actual": None if config.strict else targets[c][n_train:n],
                "predicted": comp_preds[c],
            }
        common = {**base_hash, "decompose_input": _digest(y), "components": comp_hash}
        if "ceemdan_se_gwo_lstm" in wanted:
            with _Stage("aggregate"):
                predictions["ceemdan_se_gwo_lstm"] = aggregate_components(comp_preds)
            hashes["ceemdan_se_gwo_lstm"] = dict(common)
        if "full" in wanted:
            with _Stage("spatial"):
                low_pred, spatial_info, spatial_hash, walk = _spatial_low(
                    target, by_id, cleaned, targets[low_idx], comp_preds[low_idx],
                    low_forecaster, n_train, n, config)
            info["spatial"] = spatial_info
            full = list(comp_preds)
            full[low_idx] = low_pred
            components_out[names[low_idx]]["predicted_spatial"] = low_pred
            with _Stage("aggregate"):
                predictions["full"] = aggregate_components(full)
            hashes["full"] = {**common, **spatial_hash}

    with _Stage("metrics"):
        reports = {v: compute_metrics(test, predictions[v]) for v in VARIANTS if v in predictions}
    return PipelineResult(reports, predictions, test, test_times, components_out, info, hashes, walk)


def _spatial_low(target, by_id, cleaned, target_low, univariate_pred, univariate, n_train, n, config):
    neighbors = [by_id[i] for i in target.neighbors if i in by_id]
    if not config.spatial or not neighbors or univariate is None:
        reason = "strict mode" if config.strict else ("disabled" if not config.spatial else "no neighbours")
        return univariate_pred, {"enabled": False, "reason": reason}, {"spatial_input": _digest([])}, None
    check_alignment(target, neighbors)
    lows = []
    for k, nb in enumerate(neighbors):
        _, comps = _decompose_components(cleaned[nb.station_id].values, config,
                                         derive_seed(config.seed, 5, k))
        lows.append(extract_low_frequency(comps))
    features = stack_features(target_low, lows)
    st = fit_forecaster(features, n_train, config, derive_seed(config.seed, 6))
    # the component model's own forecast is source 1, so the ablation differs only by the switch
    walk = predict_low_frequency(target_low, lows, _Fixed(univariate, univariate_pred, n_train), st,
                                 n_train, n - n_train)
    chosen = walk.chosen
    info = {
        "enabled": True,
        "neighbors": [nb.station_id for nb in neighbors],
        "steps_source_1": int(np.sum(chosen == 1)),
        "steps_source_2": int(np.sum(chosen == 2)),
        "hyperparameters": dict(st.model.meta),
    }
    return walk.predictions, info, {"spatial_input": _digest(features)}, walk


class _Fixed(Forecaster):
    """A forecaster that replays precomputed predictions for a fixed span."""

    def __init__(self, like, values, start):
        super().__init__(like.model, like.scaler, like.window, like.horizon)
        self._values = np.asarray(values, dtype=float)
        self._start = start

    def predict(self, features, targets_from, targets_to=None):
        stop = self._start + self._values.size if targets_to is None else targets_to
        idx = np.arange(targets_from, stop)
        return self._values[idx - self._start], idx


def _strict_components(y, n_train, config):
    """Leakage-free variant: decompose the training span only.

    Component models are trained on the training decomposition grouped by
    entropy band. At each test step the trailing ``strict_history`` samples
    are re-decomposed with ``strict_method`` and every IMF is routed to a
    band by its own entropy, giving causal input windows.
    """
    with _Stage("decompose"):
        imfs = decompose(y[:n_train], config.method, replace(config.emd, master_seed=derive_seed(config.seed, 3)))
        if len(imfs) == 0:
            raise InvalidInputError("training span could not be decomposed")
        ent = imf_entropies(imfs, config.sampen)
        bands = sorted({assign_band(e, config.band_edges) for e in ent})
        train_comps = _band_sum(imfs, ent, bands, config.band_edges)
    low_idx = len(bands) - 1
    n = y.size
    w = config.window
    windows = np.zeros((len(bands), n - n_train, w))
    for s, t in enumerate(range(n_train, n)):
        lo = max(0, t - config.strict_history)
        hist = decompose(y[lo:t], config.strict_method,
                         replace(config.emd, master_seed=derive_seed(config.seed, 7, t)))
        if len(hist):
            e = imf_entropies(hist, config.sampen)
            comps = _band_sum(hist, e, bands, config.band_edges)
        else:
            comps = np.zeros((len(bands), t - lo))
            comps[low_idx] = hist.residue
        windows[:, s, :] = comps[:, -w:]

    def job(c):
        fc = fit_forecaster(train_comps[c], n_train, config, derive_seed(config.seed, 4, c))
        scaled = fc.scaler.transform(windows[c][:, :, None])
        return fc.scaler.inverse(lstm_predict(fc.model, scaled))

    with _Stage("component_models"):
        preds = _map(job, range(len(bands)), config.workers)
    targets = np.zeros((len(bands), n))
    targets[:, :n_train] = train_comps
    info = {
        "n_imfs": len(imfs),
        "entropies": ent.tolist(),
        "bands": bands,
        "low_frequency_component": low_idx + 1,
        "strict": True,
    }
    return preds, low_idx, info, _digest(train_comps), targets


def _band_sum(imfs, entropies, bands, edges):
    out = np.zeros((len(bands), imfs.residue.size))
    pos = {b: i for i, b in enumerate(bands)}
    for imf, e in zip(imfs.imfs, entropies):
        b = assign_band(e, edges)
        out[pos.get(b, len(bands) - 1 if b > bands[-1] else 0)] += imf
    out[-1] += imfs.residue
    return out
