"""Short-term traffic flow forecasting with CEEMDAN decomposition, sample-entropy
regrouping, GWO-tuned LSTMs and neighbour-station correction."""

from .data import clean_series, load_station_csv, split_train_test, synth_traffic
from .decomposition import EmdConfig, ImfSet, TimeSeries, ceemdan, decompose, eemd, emd, find_extrema, reconstruct
from .entropy import ComponentSet, SampEnParams, recombine_by_entropy, sample_entropy
from .errors import FlowcastError
from .gwo import SearchSpace, WolfPack, gwo_optimize, gwo_step, tune_lstm
from .metrics import MetricsReport, aggregate_components, compute_metrics
from .neuralnet import LstmModel, TrainConfig, gradient_check, lstm_forward, lstm_train, make_windows
from .pipeline import PipelineConfig, run_pipeline
from .spatiotemporal import StationSeries, extract_low_frequency, predict_low_frequency, select_source

__version__ = "0.1.0"

__all__ = [
    "ComponentSet", "EmdConfig", "FlowcastError", "ImfSet", "LstmModel", "MetricsReport",
    "PipelineConfig", "SampEnParams", "SearchSpace", "StationSeries", "TimeSeries", "TrainConfig",
    "WolfPack", "aggregate_components", "ceemdan", "clean_series", "compute_metrics", "decompose",
    "eemd", "emd", "extract_low_frequency", "find_extrema", "gradient_check", "gwo_optimize",
    "gwo_step", "load_station_csv", "lstm_forward", "lstm_train", "make_windows",
    "predict_low_frequency", "recombine_by_entropy", "reconstruct", "run_pipeline",
    "sample_entropy", "select_source", "split_train_test", "synth_traffic", "tune_lstm",
]
