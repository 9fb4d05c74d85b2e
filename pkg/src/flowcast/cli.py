"""Command-line entry point: ``flowcast <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from .data import clean_series, load_adjacency, load_station_csv, split_train_test, synth_traffic, write_adjacency, write_station_csv
from .decomposition import DECOMPOSERS, EmdConfig, ImfSet, decompose
from .entropy import DEFAULT_BAND_EDGES, SampEnParams, imf_entropies, recombine_by_entropy
from .errors import FlowcastError, InvalidInputError, StageError
from .gwo import default_lstm_space, tune_lstm
from .metrics import compute_metrics
from .neuralnet import LstmModel, TrainConfig, load_checkpoint, lstm_train, make_windows, save_checkpoint
from .pipeline import PipelineConfig, derive_seed, fit_forecaster, load_config, parse_space, run_pipeline
from .spatiotemporal import Forecaster, extract_low_frequency, predict_low_frequency

logger = logging.getLogger("flowcast")


def _select_station(path, station, adjacency=None):
    stations = load_station_csv(path, adjacency=load_adjacency(adjacency) if adjacency else None)
    if station is None:
        return stations[0], stations
    for s in stations:
        if s.station_id == station:
            return s, stations
    raise InvalidInputError(f"station {station!r} not in {path}")


def _write_csv(path, header, rows):
    fh = open(path, "w", newline="", encoding="utf-8") if path not in (None, "-") else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def _fmt(v):
    return repr(float(v))


def _emd_config(args):
    return EmdConfig(
        noise_std=args.noise_std,
        realizations=args.realizations,
        master_seed=args.seed,
        noise_mode=args.noise_mode,
        ceemdan_variant=args.variant,
        workers=args.workers,
    )


def cmd_synth(args):
    stations = synth_traffic(args.stations, args.days, args.seed)
    write_station_csv(args.out, stations)
    if args.adjacency:
        write_adjacency(args.adjacency, stations)


def cmd_decompose(args):
    st, _ = _select_station(args.input, args.station)
    series = clean_series(st.series)
    imfs = decompose(series, args.method, _emd_config(args))
    header = ["time"] + [f"imf_{k + 1}" for k in range(len(imfs))] + ["residue"]
    rows = [[t.isoformat()] + [_fmt(v) for v in imfs.imfs[:, i]] + [_fmt(imfs.residue[i])]
            for i, t in enumerate(series.times)]
    _write_csv(args.out, header, rows)


def _read_imf_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or "residue" not in header:
            raise InvalidInputError(f"{path} is not an IMF table (needs imf_k and residue columns)")
        rows = [r for r in reader if r]
    cols = {name: i for i, name in enumerate(header)}
    imf_names = [h for h in header if h.startswith("imf_")]
    try:
        data = np.array([[float(r[cols[h]]) for h in imf_names + ["residue"]] for r in rows])
    except ValueError as exc:
        raise InvalidInputError(f"{path}: {exc}") from None
    return ImfSet(data[:, :-1].T, data[:, -1])


def cmd_entropy(args):
    imfs = _read_imf_csv(args.input)
    params = SampEnParams(args.m, args.r)
    edges = tuple(float(b) for b in args.bands.split(",")) if args.bands else DEFAULT_BAND_EDGES
    ent = imf_entropies(imfs, params)
    cs = recombine_by_entropy(imfs, params, edges, ent)
    comp_of = {i: c for c, members in enumerate(cs.members) for i in members}
    rows = [[f"imf_{i + 1}", "" if np.isnan(e) else _fmt(e), f"NEW{comp_of[i] + 1}"] for i, e in enumerate(ent)]
    _write_csv(args.out, ["imf", "sampen", "component"], rows)


def _train_split(args):
    st, _ = _select_station(args.input, args.station)
    y = clean_series(st.series).values
    train, _ = split_train_test(y, args.split)
    return st, y, train


def cmd_train(args):
    st, _, train = _train_split(args)
    data = make_windows(train, args.window)
    cfg = TrainConfig(args.lr, args.batch, args.epochs, args.seed)
    model = LstmModel.init(1, args.hidden, seed=args.seed)
    model, history = lstm_train(model, data, cfg)
    save_checkpoint(args.out, model, data.scaler, args.window,
                    {"station": st.station_id, "loss_history": history})
    print(json.dumps({"final_loss": history[-1] if history else None, "epochs": len(history)}))


def _read_space(path):
    if path is None:
        return default_lstm_space()
    with open(path, encoding="utf-8") as fh:
        entries = [ln.split("#", 1)[0].strip() for ln in fh]
    return parse_space(",".join(e for e in entries if e))


def cmd_tune(args):
    st, _, train = _train_split(args)
    data = make_windows(train, args.window)
    n = len(data)
    cut = max(1, int(round(n * 0.8)))
    res = tune_lstm(data.subset(slice(0, cut)), data.subset(slice(cut, n)), _read_space(args.space),
                    args.iters, args.seed, args.pack_size, args.warm_epochs, TrainConfig(epochs=args.epochs))
    history = [{"iteration": h["iteration"], "best_fitness": h["best_fitness"], "leaders": h["leaders"]}
               for h in res.history]
    if args.out:
        save_checkpoint(args.out, res.model, data.scaler, args.window,
                        {"station": st.station_id, "hyperparameters": res.hyperparameters})
    print(json.dumps({"history": history, "hyperparameters": res.hyperparameters,
                      "val_mse": res.val_mse}, indent=2))


def cmd_predict(args):
    st, stations = _select_station(args.input, args.station, args.adjacency)
    series = clean_series(st.series)
    y = series.values
    n_train = split_train_test(y, args.split)[0].size
    if args.spatial:
        _predict_spatial(args, st, stations, series, n_train)
        return
    if not args.model:
        raise InvalidInputError("--model is required unless --spatial is given")
    model, scaler, payload = load_checkpoint(args.model)
    fc = Forecaster(model, scaler, int(payload.get("window") or 3))
    pred, idx = fc.predict(y, n_train)
    times = series.times
    _write_csv(args.out, ["time", "actual", "predicted"],
               [[times[i].isoformat(), _fmt(y[i]), _fmt(p)] for i, p in zip(idx, pred)])


def _predict_spatial(args, st, stations, series, n_train):
    by_id = {s.station_id: s for s in stations}
    neighbors = [by_id[i] for i in st.neighbors if i in by_id]
    if not neighbors:
        raise InvalidInputError(f"station {st.station_id} has no neighbours; pass --adjacency")
    cfg = load_config(args.config) if args.config else PipelineConfig(seed=args.seed)

    def low(s, key):
        imfs = decompose(clean_series(s.series), cfg.method, replace(cfg.emd, master_seed=derive_seed(cfg.seed, *key)))
        return extract_low_frequency(recombine_by_entropy(imfs, cfg.sampen, cfg.band_edges))

    target_low = low(st, (3,))
    lows = [low(nb, (5, k)) for k, nb in enumerate(neighbors)]
    uni = fit_forecaster(target_low, n_train, cfg, derive_seed(cfg.seed, 4))
    spatial = fit_forecaster(np.column_stack([target_low, *lows]), n_train, cfg, derive_seed(cfg.seed, 6))
    walk = predict_low_frequency(target_low, lows, uni, spatial, n_train, target_low.size - n_train)
    times = series.times
    rows = [[times[i].isoformat(), _fmt(target_low[i]), _fmt(d.y_hat_1), _fmt(d.y_hat_2), d.chosen, _fmt(d.value)]
            for i, d in zip(walk.target_index, walk.trace)]
    _write_csv(args.out, ["time", "actual_low", "y_hat_1", "y_hat_2", "source", "predicted"], rows)


def cmd_evaluate(args):
    with open(args.predictions, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        fields = reader.fieldnames or []
    if "actual" not in fields:
        raise InvalidInputError(f"{args.predictions} needs an 'actual' column")
    pred_cols = [f for f in fields if f.startswith("predicted")]
    if not pred_cols:
        raise InvalidInputError(f"{args.predictions} has no predicted columns")
    actual = np.array([float(r["actual"]) for r in rows])
    out = {c: compute_metrics(actual, [float(r[c]) for r in rows]).to_dict() for c in pred_cols}
    print(json.dumps(out, indent=2, sort_keys=True))


def cmd_pipeline(args):
    if args.input:
        stations = load_station_csv(args.input, adjacency=load_adjacency(args.adjacency) if args.adjacency else None)
    else:
        stations = synth_traffic(3, args.days, args.seed)
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    if args.seed is not None and not args.config:
        overrides["seed"] = args.seed
    if args.target:
        overrides["target"] = args.target
    if args.strict:
        overrides["strict"] = True
    if args.no_spatial:
        overrides["spatial"] = False
    if args.workers:
        overrides["workers"] = args.workers
    cfg = replace(cfg, **overrides)
    result = run_pipeline(cfg, stations)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
        fh.write(result.metrics_json())
    variants = list(result.predictions)
    _write_csv(
        os.path.join(args.out_dir, "predictions.csv"),
        ["time", "actual"] + [f"predicted_{v}" for v in variants],
        [[t.isoformat(), _fmt(a)] + [_fmt(result.predictions[v][i]) for v in variants]
         for i, (t, a) in enumerate(zip(result.test_times, result.actual))],
    )
    if result.components:
        names = list(result.components)
        n = len(next(iter(result.components.values()))["series"])
        start = stations[0].series.start_time
        step = stations[0].series.step
        _write_csv(
            os.path.join(args.out_dir, "components.csv"),
            ["time"] + names,
            [[(start + i * step).isoformat()] + [_fmt(result.components[c]["series"][i]) for c in names]
             for i in range(n)],
        )
    summary = {v: {"rmse": r.rmse, "mae": r.mae, "mape": r.mape, "r2": r.r2} for v, r in result.reports.items()}
    print(json.dumps(summary, indent=2))


def build_parser():
    p = argparse.ArgumentParser(prog="flowcast", description="Decomposition-based traffic flow forecasting.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic multi-station CSV")
    s.add_argument("--stations", type=int, default=3)
    s.add_argument("--days", type=int, default=30)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--adjacency", help="also write neighbour pairs here")
    s.set_defaults(func=cmd_synth)

    def station_args(q):
        q.add_argument("input", help="CSV with time, station_id, flow columns")
        q.add_argument("--station", help="station id (default: first in file)")

    s = sub.add_parser("decompose", help="EMD/EEMD/CEEMDAN of one station")
    station_args(s)
    s.add_argument("--method", choices=sorted(DECOMPOSERS), default="ceemdan")
    s.add_argument("--noise-std", type=float, default=2000.0)
    s.add_argument("--noise-mode", choices=("absolute", "relative"), default="absolute")
    s.add_argument("--variant", choices=("classic", "improved"), default="classic",
                   help="CEEMDAN stage rule")
    s.add_argument("--realizations", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("entropy", help="sample entropy and regrouping of an IMF CSV")
    s.add_argument("input")
    s.add_argument("--m", type=int, default=2)
    s.add_argument("--r", type=float, default=0.2, help="tolerance as a fraction of each IMF's std")
    s.add_argument("--bands", help="comma-separated decreasing band edges, e.g. inf,1,0.5,0.1,0")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_entropy)

    def train_args(q):
        station_args(q)
        q.add_argument("--split", type=float, default=0.8)
        q.add_argument("--window", type=int, default=3)
        q.add_argument("--epochs", type=int, default=200)
        q.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("train", help="train one LSTM on a station's training span")
    train_args(s)
    s.add_argument("--hidden", type=int, default=32)
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--batch", type=int, default=1024)
    s.add_argument("--out", required=True, help="checkpoint JSON path")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("tune", help="GWO search over LSTM hyperparameters")
    train_args(s)
    s.add_argument("--pack-size", type=int, default=6)
    s.add_argument("--iters", type=int, default=5)
    s.add_argument("--warm-epochs", type=int, default=40)
    s.add_argument("--space", help="file with one name:low:high[:int] entry per line")
    s.add_argument("--out", help="checkpoint JSON for the tuned model")
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("predict", help="one-step forecasts over the test span")
    station_args(s)
    s.add_argument("--model", help="checkpoint JSON")
    s.add_argument("--split", type=float, default=0.8)
    s.add_argument("--spatial", action="store_true", help="neighbour-corrected low-frequency walk")
    s.add_argument("--adjacency")
    s.add_argument("--config", help="pipeline INI used by --spatial")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="metrics for a predictions CSV")
    s.add_argument("predictions", help="CSV with actual and predicted* columns")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("pipeline", help="full run with ablation variants")
    s.add_argument("input", nargs="?", help="multi-station CSV (default: synthetic 3-station data)")
    s.add_argument("--adjacency")
    s.add_argument("--config", help="INI config file")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--days", type=int, default=30, help="length of synthetic data")
    s.add_argument("--target")
    s.add_argument("--strict", action="store_true", help="causal decomposition, no look-ahead")
    s.add_argument("--no-spatial", action="store_true")
    s.add_argument("--workers", type=int)
    s.add_argument("--out-dir", default="flowcast-out")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"flowcast: error: {exc}", file=sys.stderr)
        return 1
    except (FlowcastError, ValueError, ArithmeticError, OSError) as exc:
        print(f"flowcast: error: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
