import json
import os
import subprocess
import urllib.request
from pathlib import Path

import pytest

CLI = os.environ.get("AIRHOLD_CLI")
pytestmark = pytest.mark.skipif(not CLI, reason="AIRHOLD_CLI not set")

SMALL = ["--records", "4000", "--positives", "200", "--airports", "7", "--rounds", "30", "--gat-epochs", "10"]


def run(*args, check=True):
    return subprocess.run([CLI, *args], capture_output=True, text=True, check=check)


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    run("pipeline", "--seed", "11", "--out", str(out), *SMALL)
    return out


def test_pipeline_outputs(pipeline_dir):
    for name in ["train.csv", "test.csv", "graph.json", "table.csv", "report.json", "manifest.json"]:
        assert (pipeline_dir / name).is_file(), name
    manifest = json.loads((pipeline_dir / "manifest.json").read_text())
    assert manifest["command"] == "pipeline"
    assert manifest["seed"] == 11
    assert len(manifest["config_sha256"]) == 64


def test_pipeline_is_reproducible(pipeline_dir, tmp_path):
    run("pipeline", "--seed", "11", "--out", str(tmp_path), *SMALL)
    assert (tmp_path / "report.json").read_bytes() == (pipeline_dir / "report.json").read_bytes()
    assert (tmp_path / "table.csv").read_bytes() == (pipeline_dir / "table.csv").read_bytes()


def test_missing_required_option_is_usage_error():
    r = run("pipeline", check=False)
    assert r.returncode == 2
    assert "--out" in r.stderr


def test_runtime_error_is_json(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("origin,destination\nA,B\n")
    r = run("build-graph", "--data", str(bad), "--out", str(tmp_path / "g.json"), check=False)
    assert r.returncode == 1
    err = json.loads(r.stderr.strip().splitlines()[-1])
    assert set(err) == {"error", "message"}


def test_evaluate_writes_table_row(pipeline_dir, tmp_path):
    feats = tmp_path / "test_features.csv"
    run("features", "--data", str(pipeline_dir / "test.csv"), "--graph", str(pipeline_dir / "graph.json"), "--out", str(feats))
    csv = tmp_path / "row.csv"
    run("evaluate", "--model", str(pipeline_dir / "models" / "classifier.json"), "--data", str(feats),
        "--report", str(tmp_path / "m.json"), "--csv", str(csv), "--name", "gbdt_graph_features")
    header, row = csv.read_text().splitlines()
    assert header == "model,accuracy,precision,recall,f1"
    assert row.startswith("gbdt_graph_features,")
    report = json.loads((tmp_path / "m.json").read_text())
    assert report["tp"] + report["fp"] + report["tn"] + report["fn"] == len((pipeline_dir / "test.csv").read_text().splitlines()) - 1


def test_serve(pipeline_dir):
    proc = subprocess.Popen([CLI, "serve", "--model-dir", str(pipeline_dir / "models"), "--graph",
                             str(pipeline_dir / "graph.json"), "--bind", "127.0.0.1:0"],
                            stdout=subprocess.PIPE, text=True)
    try:
        line = proc.stdout.readline()
        assert line.startswith("listening on ")
        base = "http://" + line.split()[-1]
        with urllib.request.urlopen(base + "/health", timeout=10) as r:
            assert r.status == 200
            assert json.loads(r.read())["status"] == "ok"
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def test_train_single_model_from_config(pipeline_dir, tmp_path):
    feats = tmp_path / "train_features.csv"
    run("features", "--data", str(pipeline_dir / "train.csv"), "--graph", str(pipeline_dir / "graph.json"), "--out", str(feats))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"rounds": 5, "max_depth": 3}))
    model = tmp_path / "cls.json"
    run("train-gbdt", "--task", "cls", "--config", str(cfg), "--rounds", "7", "--train", str(feats), "--model-out", str(model))
    saved = json.loads(model.read_text())
    assert saved["task"] == "classification"
    assert len(saved["trees"]) == 7
    r = run("train-gbdt", "--train", str(feats), check=False)
    assert r.returncode == 2


def test_synth_accepts_n(tmp_path):
    out = tmp_path / "s.csv"
    run("synth", "--seed", "2", "--n", "500", "--positives", "20", "--airports", "5", "--out", str(out))
    assert len(out.read_text().splitlines()) == 501
