import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from supcfa.cli import main
from supcfa.model import ModelParams, save_model

SPEC = {"n": 10, "d_image": 6, "d_text": 5, "num_classes": 2, "shared_dim": 2,
        "noise_sigma": 0.1, "seed": 3}


def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(SPEC))
    return path


@pytest.fixture
def data_file(tmp_path, spec_file):
    path = tmp_path / "data.jsonl"
    assert run("synth", "--spec", spec_file, "--out", path) == 0
    return path


def test_synth_line_count(data_file):
    assert len(data_file.read_text().splitlines()) == 10


def test_synth_byte_identical(tmp_path, spec_file, data_file):
    again = tmp_path / "again.jsonl"
    assert run("synth", "--spec", spec_file, "--out", again) == 0
    assert again.read_bytes() == data_file.read_bytes()


def test_synth_missing_directory(tmp_path, spec_file, capsys):
    assert run("synth", "--spec", spec_file, "--out", tmp_path / "nope" / "d.jsonl") == 2
    assert "does not exist" in capsys.readouterr().err


def test_synth_invalid_spec(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**SPEC, "shared_dim": 9}))
    assert run("synth", "--spec", bad, "--out", tmp_path / "d.jsonl") != 0


def test_train_missing_data(tmp_path, capsys):
    assert run("train", "--model-out", tmp_path / "m.json") == 2
    assert run("train", "--data", tmp_path / "none.jsonl", "--model-out", tmp_path / "m.json") == 2


def test_train_random_init_deterministic(tmp_path, data_file):
    hyper = tmp_path / "hp.json"
    hyper.write_text(json.dumps({"shared_dim": 2, "max_iters": 5}))
    outs = []
    for k in range(2):
        model, trace = tmp_path / f"m{k}.json", tmp_path / f"t{k}.csv"
        assert run("train", "--data", data_file, "--hyper", hyper, "--init", "random",
                   "--seed", 7, "--model-out", model, "--trace-out", trace) == 0
        outs.append((model.read_bytes(), trace.read_bytes()))
    assert outs[0][0] == outs[1][0]
    assert len(outs[0][1].splitlines()) >= 2


def test_train_predict_round_trip(tmp_path, data_file):
    model = tmp_path / "m.json"
    assert run("train", "--data", data_file, "--standardize", "--model-out", model) == 0
    doc = json.loads(model.read_text())
    assert "standardizer" in doc and doc["training"]["init"] == "unsupervised"
    pred = tmp_path / "p.csv"
    assert run("predict", "--model", model, "--modality", "text", "--input", data_file,
               "--out", pred) == 0
    rows = list(csv.reader(open(pred)))
    assert rows[0][:2] == ["index", "predicted_class"] and len(rows) == 11


def test_predict_zero_model(tmp_path):
    model = tmp_path / "zero.json"
    save_model(ModelParams(np.eye(3)[:, :2], np.eye(2), np.zeros((2, 3))), model)
    query = tmp_path / "q.csv"
    query.write_text("1,2,3\n-4,0.5,9\n0,0,0\n")
    out = tmp_path / "p.csv"
    assert run("predict", "--model", model, "--modality", "image", "--input", query,
               "--out", out) == 0
    rows = list(csv.reader(open(out)))[1:]
    assert [r[1] for r in rows] == ["0", "0", "0"]


def test_predict_empty_input(tmp_path, capsys):
    model = tmp_path / "zero.json"
    save_model(ModelParams(np.eye(2), np.eye(2), np.zeros((2, 2))), model)
    empty = tmp_path / "q.csv"
    empty.write_text("")
    assert run("predict", "--model", model, "--modality", "image", "--input", empty,
               "--out", tmp_path / "p.csv") == 1
    assert "empty" in capsys.readouterr().err


def _cv_config(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({
        "dataset": {"synthetic": {**SPEC, "n": 40}},
        "hyperparams": {"shared_dim": 2, "max_iters": 10},
        "num_folds": 4, "seed": 2,
    }))
    return path


def test_cv_single_method(tmp_path):
    out = tmp_path / "res"
    assert run("cv", "--config", _cv_config(tmp_path), "--out-dir", out,
               "--methods", "cfa_baseline") == 0
    rows = list(csv.reader(open(out / "boxplot.csv")))
    assert len(rows) == 2 and rows[1][0] == "cfa_baseline"
    assert not list(out.glob("convergence_fold*.csv"))


def test_cv_rerun_identical(tmp_path):
    config = _cv_config(tmp_path)
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert run("cv", "--config", config, "--out-dir", d) == 0
    names = sorted(p.name for p in dirs[0].iterdir())
    assert "boxplot.csv" in names and "convergence_fold03.csv" in names
    assert names == sorted(p.name for p in dirs[1].iterdir())
    for name in names:
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()


def test_cv_missing_config(tmp_path):
    assert run("cv", "--config", tmp_path / "none.json", "--out-dir", tmp_path / "o") == 2


def test_convergence_command(tmp_path):
    out = tmp_path / "curve.csv"
    assert run("convergence", "--config", _cv_config(tmp_path), "--out", out,
               "--max-iters", 6, "--no-early-stop") == 0
    assert len(out.read_text().splitlines()) == 7


def test_module_entry_point(tmp_path, spec_file):
    out = tmp_path / "d.jsonl"
    proc = subprocess.run(
        [sys.executable, "-m", "supcfa", "synth", "--spec", str(spec_file), "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and proc.stdout == ""
    assert len(out.read_text().splitlines()) == 10
