import json
import math
from pathlib import Path

import pytest

from consensus_rate.cli import EXIT_CAPACITY, EXIT_DATA, EXIT_OK, EXIT_USAGE, RunManifest, dispatch
from consensus_rate.graph import path_graph, write_graph

DATA = Path(__file__).resolve().parents[1] / "data"


def _json(path):
    return json.loads(Path(path).read_text())


def test_rate_k4_gossip(tmp_path):
    out = tmp_path / "r.json"
    assert dispatch(["rate", "--model", "gossip", "--graph", str(DATA / "k4_uniform.txt"), "--out", str(out)]) == EXIT_OK
    body = _json(out)
    assert body["rate"] == pytest.approx(math.log(2), abs=1e-12)
    assert body["manifest"]["subcommand"] == "rate"
    assert len(body["manifest"]["hash"]) == 16


def test_rate_closed_forms_and_bits(tmp_path):
    out = tmp_path / "r.json"
    assert dispatch(["rate", "--model", "link-failure", "--closed-form", "regular:4,2,0.5", "--bits",
                     "--out", str(out)]) == EXIT_OK
    assert _json(out)["rate"] == pytest.approx(2.0, abs=1e-12)
    assert dispatch(["rate", "--model", "link-failure", "--graph", str(DATA / "c4.txt"), "--out", str(out)]) == EXIT_OK
    assert _json(out)["rate"] == pytest.approx(2 * math.log(2), abs=1e-12)


def test_mincut_triangle(tmp_path):
    out = tmp_path / "c.json"
    assert dispatch(["mincut", "--graph", str(DATA / "triangle_123.txt"), "--out", str(out)]) == EXIT_OK
    assert _json(out)["value"] == pytest.approx(3)


def test_enumerate_toy(tmp_path):
    out = tmp_path / "e.json"
    assert dispatch(["enumerate", "--model-file", str(DATA / "toy.json"), "--out", str(out)]) == EXIT_OK
    body = _json(out)
    assert body["p_max"] == pytest.approx(2 / 3)
    assert sorted(c["p"] for c in body["collections"]) == pytest.approx([1 / 3, 2 / 3])


def test_simulate_toy_csv_and_summary(tmp_path):
    csv_path, summary = tmp_path / "s.csv", tmp_path / "s.json"
    argv = ["simulate", "--model-file", str(DATA / "toy.json"), "--k-min", "4", "--k-max", "12", "--k-step", "2",
            "--trials", "20000", "--out", str(csv_path), "--summary", str(summary)]
    assert dispatch(argv) == EXIT_OK
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("# manifest ")
    assert lines[1] == "k,p_hat,ci_low,ci_high,exact_dp"
    assert len(lines) == 2 + 5
    s = _json(summary)
    assert s["exact_rate"] == pytest.approx(math.log(1.5))
    assert abs(s["empirical_rate"] - math.log(1.5)) < 0.05


def test_reruns_are_byte_identical(tmp_path):
    base = ["simulate", "--model-file", str(DATA / "toy.json"), "--k-max", "6", "--trials", "5000", "--seed", "3"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert dispatch(base + ["--out", str(a)]) == EXIT_OK
    assert dispatch(base + ["--out", str(b), "--threads", "3"]) == EXIT_OK
    # the manifest lists its own output path, so compare past that field
    assert a.read_text().splitlines()[1:] == b.read_text().splitlines()[1:]
    assert dispatch(base + ["--out", str(a)]) == EXIT_OK
    first = a.read_bytes()
    assert dispatch(base + ["--out", str(a)]) == EXIT_OK
    assert a.read_bytes() == first


def test_manifest_hash_in_header(tmp_path):
    out = tmp_path / "s.csv"
    assert dispatch(["simulate", "--model-file", str(DATA / "toy.json"), "--k-max", "4", "--trials", "2000",
                     "--out", str(out)]) == EXIT_OK
    tag, digest, payload = out.read_text().splitlines()[0][2:].split(" ", 2)
    manifest = json.loads(payload)
    assert tag == "manifest" and digest == manifest["hash"]
    rebuilt = RunManifest(manifest["subcommand"], manifest["config"], manifest["seed"], manifest["version"])
    assert rebuilt.digest == digest


def test_manifest_hash_tracks_config():
    a = RunManifest("simulate", {"trials": 10}, seed=0)
    assert a.digest == RunManifest("simulate", {"trials": 10}, seed=0, outputs=["x"]).digest
    assert a.digest != RunManifest("simulate", {"trials": 11}, seed=0).digest
    assert a.digest != RunManifest("simulate", {"trials": 10}, seed=1).digest


def test_exit_codes(tmp_path, capsys):
    assert dispatch(["frobnicate"]) == EXIT_USAGE
    assert dispatch(["rate", "--model", "gossip", "--bogus"]) == EXIT_USAGE
    assert dispatch(["rate", "--model", "gossip", "--graph", str(tmp_path / "missing.txt")]) == EXIT_USAGE
    assert dispatch(["rate", "--model", "gossip"]) == EXIT_USAGE
    assert dispatch(["simulate", "--model-file", str(DATA / "toy.json"), "--threads", "0"]) == EXIT_USAGE
    # every realization connected: no horizon ever disconnects
    cfg = tmp_path / "conn.json"
    cfg.write_text(json.dumps({"type": "explicit", "n": 3,
                               "realizations": [{"edges": [[0, 1], [1, 2]], "p": 1.0}]}))
    assert dispatch(["simulate", "--model-file", str(cfg), "--k-max", "5", "--trials", "100"]) == EXIT_DATA
    # a long path under link failure has too many realizations to enumerate
    g = tmp_path / "path.txt"
    write_graph(path_graph(30), g)
    model = tmp_path / "lf.json"
    model.write_text(json.dumps({"type": "link_failure", "graph": str(g), "p": 0.5}))
    assert dispatch(["enumerate", "--model-file", str(model), "--cap", "10"]) == EXIT_CAPACITY
    capsys.readouterr()


def test_allocate_then_detect(tmp_path):
    alloc = tmp_path / "alloc.json"
    argv = ["allocate", "--graph", str(DATA / "geometric14.txt"), "--istar", "0.0455", "--iters", "300",
            "--out", str(alloc)]
    assert dispatch(argv) == EXIT_OK
    body = _json(alloc)
    assert len(body["edges"]) == 38
    assert body["feasible"] and body["violation"] == 0
    assert body["total_power"] <= body["initial_total_power"]
    assert {"i", "j", "S", "P_ij", "c_ij"} <= set(body["edges"][0])

    cfg = tmp_path / "detect.json"
    cfg.write_text(json.dumps({"graph": str(DATA / "geometric14.txt"), "m": 0.0447, "sigma2": 1.0,
                               "horizon": 50, "trials": 300, "seed": 2}))
    out1, out2 = tmp_path / "d1.csv", tmp_path / "d2.csv"
    assert dispatch(["detect", "--config", str(cfg), "--power-file", str(alloc), "--out", str(out1)]) == EXIT_OK
    assert dispatch(["detect", "--config", str(cfg), "--power-file", str(alloc), "--out", str(out2),
                     "--threads", "2"]) == EXIT_OK
    rows1 = out1.read_text().splitlines()
    assert rows1[1] == "k,worst_error,ci_low,ci_high" and len(rows1) == 52
    assert rows1[2:] == out2.read_text().splitlines()[2:]
    # detection and the allocation must agree on the edge set
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**body, "edges": body["edges"][:-1]}))
    assert dispatch(["detect", "--config", str(cfg), "--power-file", str(bad)]) == EXIT_USAGE


def test_detect_config_errors(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"generator": {"n": 6, "edges": 9}, "m": 0.1, "horizon": 5, "trials": 10,
                               "colour": "red"}))
    assert dispatch(["detect", "--config", str(cfg)]) == EXIT_USAGE
    cfg.write_text(json.dumps({"generator": {"n": 6, "edges": 9}, "m": 0.1, "horizon": 5, "trials": 10}))
    assert dispatch(["detect", "--config", str(cfg)]) == EXIT_USAGE
    cfg.write_text("{not json")
    assert dispatch(["detect", "--config", str(cfg)]) == EXIT_USAGE
