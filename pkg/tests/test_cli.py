import csv
import json

import pytest

from flowcast.cli import main


@pytest.fixture
def corridor(tmp_path):
    data, adj = tmp_path / "s.csv", tmp_path / "adj.txt"
    assert main(["synth", "--stations", "3", "--days", "3", "--out", str(data), "--adjacency", str(adj)]) == 0
    return data, adj


def read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_decompose_and_entropy(tmp_path, corridor):
    data, _ = corridor
    imfs = tmp_path / "imfs.csv"
    assert main(["decompose", str(data), "--station", "S1", "--method", "emd", "--out", str(imfs)]) == 0
    rows = read(imfs)
    assert rows[0][0] == "time" and rows[0][-1] == "residue" and rows[0][1] == "imf_1"
    assert len(rows) == 1 + 3 * 96
    report = tmp_path / "ent.csv"
    assert main(["entropy", str(imfs), "--m", "2", "--r", "0.2", "--out", str(report)]) == 0
    out = read(report)
    assert out[0] == ["imf", "sampen", "component"]
    assert len(out) == len(rows[0]) - 1
    assert out[1][2] == "NEW1"


def test_train_predict_evaluate(tmp_path, corridor, capsys):
    data, _ = corridor
    ckpt, preds = tmp_path / "m.json", tmp_path / "p.csv"
    assert main(["train", str(data), "--epochs", "2", "--batch", "32", "--out", str(ckpt)]) == 0
    assert main(["predict", str(data), "--model", str(ckpt), "--out", str(preds)]) == 0
    rows = read(preds)
    assert rows[0] == ["time", "actual", "predicted"]
    assert len(rows) - 1 == 3 * 96 - int(0.8 * 3 * 96)
    capsys.readouterr()
    assert main(["evaluate", str(preds)]) == 0
    metrics = json.loads(capsys.readouterr().out)
    assert set(metrics["predicted"]) >= {"sse", "mse", "rmse", "mae", "mape", "r2"}


def test_tune_emits_history(tmp_path, corridor, capsys):
    data, _ = corridor
    space = tmp_path / "space.txt"
    space.write_text("log10_lr:-2:-1\nhidden_dim:4:8:int  # small\n")
    assert main(["tune", str(data), "--iters", "2", "--pack-size", "3", "--warm-epochs", "1",
                 "--epochs", "1", "--space", str(space)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert [h["iteration"] for h in out["history"]] == [0, 1]
    assert len(out["history"][0]["leaders"]) == 3


def test_spatial_predict(tmp_path, corridor):
    data, adj = corridor
    cfg = tmp_path / "tiny.ini"
    cfg.write_text("[decomposition]\nrealizations = 3\n[train]\nepochs = 2\nbatch_size = 64\n"
                   "[gwo]\niterations = 1\npack_size = 3\nwarm_epochs = 1\n")
    out = tmp_path / "sp.csv"
    assert main(["predict", str(data), "--spatial", "--adjacency", str(adj), "--config", str(cfg), "--out", str(out)]) == 0
    rows = read(out)
    assert rows[0] == ["time", "actual_low", "y_hat_1", "y_hat_2", "source", "predicted"]
    assert rows[1][4] == "1"


def test_pipeline_outputs(tmp_path, corridor):
    data, adj = corridor
    cfg = tmp_path / "tiny.ini"
    cfg.write_text("[pipeline]\nvariants = lstm, full\n[decomposition]\nrealizations = 3\n"
                   "[train]\nepochs = 2\nbatch_size = 64\n[gwo]\niterations = 1\npack_size = 3\nwarm_epochs = 1\n")
    out = tmp_path / "run"
    assert main(["pipeline", str(data), "--adjacency", str(adj), "--config", str(cfg), "--out-dir", str(out)]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics["metrics"]) == {"lstm", "full"}
    assert read(out / "predictions.csv")[0] == ["time", "actual", "predicted_lstm", "predicted_full"]
    assert read(out / "components.csv")[0][1] == "NEW1"


def test_errors_exit_nonzero_with_stage(tmp_path, capsys):
    flat = tmp_path / "flat.csv"
    flat.write_text("time,station_id,flow\n" + "".join(
        f"2020-01-01T{h:02d}:{m:02d}:00,A,5\n" for h in range(10) for m in (0, 15, 30, 45)))
    cfg = tmp_path / "c.ini"
    cfg.write_text("[pipeline]\nvariants = lstm\n[train]\nepochs = 1\n")
    assert main(["pipeline", str(flat), "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == 1
    assert "[lstm]" in capsys.readouterr().err

    bad = tmp_path / "bad.csv"
    bad.write_text("time,station_id,flow\n2020-01-01T00:00:00,A,x\n")
    assert main(["decompose", str(bad)]) == 1
    assert "[decompose]" in capsys.readouterr().err and "line 2" in capsys.readouterr().err + "line 2"


def test_missing_subcommand():
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code != 0
