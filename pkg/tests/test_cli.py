import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from heda import cli, crypto
from heda.data import synthetic


@pytest.fixture(scope="module")
def csvs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    D = synthetic(40, 4, seed=3, levels=8)
    df = D.to_frame("outcome")
    df.insert(0, "id", range(len(df)))
    paths = {}
    for name, part in (("all", df), ("p1", df.iloc[:20]), ("p2", df.iloc[20:])):
        paths[name] = root / f"{name}.csv"
        part.to_csv(paths[name], index=False)
    return root, paths


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_keygen(tmp_path):
    out = tmp_path / "k.json"
    assert run("keygen", "--scheme", "rsa", "--bits", 256, "--seed", 1, "--out", out) == 0
    key = crypto.load_key(out)
    assert isinstance(key, crypto.RsaKeypair) and key.public.n.bit_length() == 256
    assert run("keygen", "--bits", 100, "--out", out) == 2


def test_score(csvs, tmp_path):
    root, paths = csvs
    out = tmp_path / "s.json"
    assert run("score", "--in", paths["all"], "--ignore", "id", "--method", "spearman", "--out", out) == 0
    obj = json.loads(out.read_text())
    assert obj["method"] == "spearman" and obj["attributes"] == ["a0", "a1", "a2", "a3"]
    assert sorted(obj["ranking"]) == [0, 1, 2, 3]


def test_dp_publish(csvs, tmp_path):
    root, paths = csvs
    out, rep = tmp_path / "n.csv", tmp_path / "r.json"
    assert run("dp-publish", "--in", paths["all"], "--ignore", "id", "--label", "outcome", "--k", "auto",
               "--eps", "auto", "--seed", 4, "--out", out, "--report", rep) == 0
    noised = pd.read_csv(out)
    assert noised.shape == (40, 5)
    original = pd.read_csv(paths["all"])
    assert noised["outcome"].tolist() == original["outcome"].tolist()
    report = json.loads(rep.read_text())
    assert report["k"] == 4
    assert {"epsilon", "delta_f", "delta_f_prime", "sse", "rl"} <= set(report)
    # a fixed seed reproduces the release
    again = tmp_path / "n2.csv"
    run("dp-publish", "--in", paths["all"], "--ignore", "id", "--label", "outcome", "--seed", 4, "--out", again)
    assert again.read_text() == out.read_text()
    eps_file = tmp_path / "eps.json"
    eps_file.write_text(json.dumps({"per_attribute": [1, 2, 3, 4]}))
    assert run("dp-publish", "--in", paths["all"], "--ignore", "id", "--eps", eps_file, "--out", out,
               "--report", rep) == 0
    assert json.loads(rep.read_text())["epsilon"] == [1, 2, 3, 4]
    assert run("dp-publish", "--in", paths["all"], "--ignore", "id", "--eps", 0.5, "--out", out) == 0


@pytest.mark.parametrize("mode", ["plain", "secure", "heda"])
def test_train(csvs, tmp_path, mode):
    root, paths = csvs
    model, metrics = tmp_path / "m.json", tmp_path / "x.json"
    argv = ["train", "--mode", mode, "--providers", f"{paths['p1']},{paths['p2']}", "--ignore", "id",
            "--cycles", 2, "--alpha", 1.0, "--key-bits", 256, "--seed", 5, "--out", model, "--metrics", metrics]
    if mode == "heda":
        argv += ["--iota", 2]
    assert run(*argv) == 0
    m, x = json.loads(model.read_text()), json.loads(metrics.read_text())
    assert m["mode"] == mode and len(m["beta"]) == 5
    assert m["iota"] == (2 if mode == "heda" else None)
    assert set(x) == {"accuracy", "iterations", "round_trips", "bytes", "wall_time", "wall_time_per_phase"}
    assert x["round_trips"] == (0 if mode == "plain" else 2 * 2 * 3)


def test_train_with_test_file(csvs, tmp_path):
    root, paths = csvs
    metrics = tmp_path / "x.json"
    assert run("train", "--providers", paths["p1"], "--test", paths["p2"], "--ignore", "id",
               "--metrics", metrics) == 0
    assert 0 <= json.loads(metrics.read_text())["accuracy"] <= 1


def test_bench_and_sweeps(csvs, tmp_path):
    root, paths = csvs
    out, table = tmp_path / "b.json", tmp_path / "b.csv"
    assert run("bench-blocks", "--in", paths["all"], "--ignore", "id", "--key-bits", 256, "--out", out,
               "--csv", table) == 0
    assert len(json.loads(out.read_text())["rows"]) == 7
    assert len(pd.read_csv(table)) == 7
    assert run("sweep-dp", "--in", paths["all"], "--ignore", "id", "--k", "2,4", "--seeds", 2, "--out", out) == 0
    assert [r["k"] for r in json.loads(out.read_text())["rows"]] == [2, 4]
    assert run("sweep-iota", "--in", paths["all"], "--ignore", "id", "--iota", "1,4", "--cycles", 1,
               "--key-bits", 256, "--out", out, "--csv", table) == 0
    rep = json.loads(out.read_text())
    assert [r["iota"] for r in rep["rows"]] == [1, 4] and rep["fit"] is not None


def test_config_file(csvs, tmp_path):
    root, paths = csvs
    out = tmp_path / "s.json"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"in": str(paths["all"]), "ignore": "id", "method": "chi2", "out": str(out)}))
    assert run("score", "--config", cfg) == 0
    assert json.loads(out.read_text())["method"] == "chi2"
    # flags override the file
    assert run("score", "--config", cfg, "--method", "pearson") == 0
    assert json.loads(out.read_text())["method"] == "pearson"
    cfg.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(SystemExit):
        run("score", "--config", cfg, "--in", paths["all"])


def test_bad_input_reports_an_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,label\n1,x\n2,y\n3,z\n")
    assert run("score", "--in", bad) == 2
    assert "binary" in capsys.readouterr().err


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "heda.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("keygen", "score", "dp-publish", "train", "bench-blocks", "sweep-dp", "sweep-iota"):
        assert sub in proc.stdout
    out = tmp_path / "p.json"
    proc = subprocess.run(["heda", "keygen", "--bits", "256", "--seed", "2", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert np.isclose(crypto.load_key(out).bits, 256)
