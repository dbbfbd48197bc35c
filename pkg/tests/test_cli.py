import hashlib
import json

import numpy as np
import pytest

from safetyscore import io as sio
from safetyscore.cli import main
from safetyscore.defaults import default_conversion, default_graph
from safetyscore.latency import BaselineLatencyRegressor
from safetyscore.planning import match_cluster
from safetyscore.simulate import SystemModel


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for var in ("SEED", "FRAMES", "RIDGE", "H", "POLICY", "CONFIG", "NO_HEADER"):
        monkeypatch.delenv("SAFETYSCORE_" + var, raising=False)
    return tmp_path


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_gen_lines_and_determinism(work):
    assert main(["gen", "--frames", "1000", "--seed", "7", "--out", "a.jsonl"]) == 0
    assert len((work / "a.jsonl").read_text().splitlines()) == 1000
    assert main(["gen", "--frames", "1000", "--seed", "7", "--out", "b.jsonl"]) == 0
    assert sha(work / "a.jsonl") == sha(work / "b.jsonl")


def test_usage_errors(work, capsys):
    assert main(["gen", "--frames", "0"]) == 2
    assert main(["fit", "--trace", "missing.jsonl"]) == 2
    assert main(["nonsense"]) == 2
    assert main(["fit", "--ridge", "-1"]) == 2
    (work / "bad.json").write_text('{"unknown_key": 1}')
    assert main(["gen", "--config", "bad.json"]) == 2
    assert main(["gen", "--seed", "-3"]) == 2


def test_data_error(work):
    (work / "t.jsonl").write_text("{not json\n")
    assert main(["fit", "--trace", "t.jsonl"]) == 3


def test_noiseless_fit_and_reload(work, capsys):
    cfg = {"generator": {"latency_noise": 0.0, "response_noise": 0.0}, "ridge": 0.0}
    (work / "cfg.json").write_text(json.dumps(cfg))
    assert main(["gen", "--config", "cfg.json", "--frames", "300", "--seed", "2", "--out", "t.jsonl"]) == 0
    assert main(["fit", "--config", "cfg.json", "--trace", "t.jsonl", "--out", "m.json"]) == 0
    out = capsys.readouterr().out
    reported = {line.split()[0]: float(line.split("mse=")[1]) for line in out.splitlines() if "mse=" in line}
    assert len(reported) == 11 and max(reported.values()) <= 1e-8

    doc = sio.read_json(work / "m.json")
    assert doc["log"] == "log1p" and "generated_at" in doc
    model = sio.load_model(work / "m.json")
    trace = sio.read_trace(work / "t.jsonl")
    X = model.density_matrix(trace)
    for j, n in enumerate(model.graph.names):
        y = np.array([f.latencies[n] for f in trace])
        mse = float(np.mean((model.regressor.predict(X)[:, j] - y) ** 2))
        assert mse == pytest.approx(doc["modules"][n]["mse"], abs=1e-15)


def test_pipeline_and_outputs(work, capsys):
    assert main(["gen", "--frames", "300", "--seed", "4", "--out", "t.jsonl"]) == 0
    assert main(["fit", "--trace", "t.jsonl", "--out", "m.json", "--ridge", "gcv", "--no-header"]) == 0
    assert "generated_at" not in sio.read_json(work / "m.json")
    assert main(["plan", "--trace", "t.jsonl", "--model", "m.json", "--out", "s.json", "--h", "50"]) == 0
    store = sio.load_store(work / "s.json")
    assert store.h == 50 and store.k >= 1

    assert main(["run", "--trace", "t.jsonl", "--model", "m.json", "--policy", "managed"]) == 2
    for policy in ("cpu", "cpu-gpu", "managed"):
        assert main(["run", "--trace", "t.jsonl", "--model", "m.json", "--store", "s.json",
                     "--policy", policy, "--out", f"{policy}.json", "--csv", f"{policy}.csv"]) == 0
    rows = (work / "managed.csv").read_text().splitlines()
    assert rows[0].startswith("# generated_at") and len(rows) == 302
    label = store.plans[0].label()
    assert main(["run", "--trace", "t.jsonl", "--model", "m.json", "--plan", label, "--out", "p.json"]) == 0
    assert main(["run", "--trace", "t.jsonl", "--model", "m.json", "--plan", "9999", "--out", "p.json"]) == 2

    capsys.readouterr()
    assert main(["compare", "cpu.json", "cpu-gpu.json", "managed.json", "--no-header"]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0].startswith("label,safety,p95")
    assert "# best_safety=" in text
    assert main(["compare", "cpu.json"]) == 2


def test_compare_all_plans(work, capsys):
    assert main(["gen", "--frames", "120", "--seed", "5", "--out", "t.jsonl"]) == 0
    assert main(["fit", "--trace", "t.jsonl", "--out", "m.json", "--ridge", "gcv"]) == 0
    assert main(["compare", "--all-plans", "--trace", "t.jsonl", "--model", "m.json", "--out", "c.csv"]) == 0
    body = [r for r in (work / "c.csv").read_text().splitlines() if not r.startswith("#")]
    assert len(body) == 1 + 32


def test_single_plan_space_gives_one_cluster(work, capsys):
    doc = sio.graph_to_dict(default_graph(), default_conversion())
    for node in doc["modules"]:
        node["resources"] = [0]
        node["conversion"] = {}
    (work / "g.json").write_text(json.dumps(doc))
    assert main(["gen", "--graph", "g.json", "--frames", "120", "--out", "t.jsonl"]) == 0
    assert main(["fit", "--graph", "g.json", "--trace", "t.jsonl", "--out", "m.json"]) == 0
    assert main(["plan", "--trace", "t.jsonl", "--model", "m.json", "--out", "s.json"]) == 0
    assert sio.load_store(work / "s.json").k == 1


def test_empty_trace_plan_is_usage_error(work):
    assert main(["gen", "--frames", "50", "--out", "t.jsonl"]) == 0
    assert main(["fit", "--trace", "t.jsonl", "--out", "m.json"]) == 0
    (work / "empty.jsonl").write_text("")
    assert main(["plan", "--trace", "empty.jsonl", "--model", "m.json"]) == 2


def test_env_overrides(work, monkeypatch):
    monkeypatch.setenv("SAFETYSCORE_FRAMES", "12")
    monkeypatch.setenv("SAFETYSCORE_SEED", "9")
    assert main(["gen", "--out", "e.jsonl"]) == 0
    assert len((work / "e.jsonl").read_text().splitlines()) == 12
    assert main(["gen", "--frames", "3", "--out", "f.jsonl"]) == 0
    assert len((work / "f.jsonl").read_text().splitlines()) == 3
    monkeypatch.setenv("SAFETYSCORE_FRAMES", "many")
    assert main(["gen", "--out", "g.jsonl"]) == 2


def test_store_round_trip_matching(work):
    assert main(["gen", "--frames", "200", "--seed", "8", "--out", "t.jsonl"]) == 0
    assert main(["fit", "--trace", "t.jsonl", "--out", "m.json", "--ridge", "gcv"]) == 0
    assert main(["plan", "--trace", "t.jsonl", "--model", "m.json", "--out", "s.json", "--scale-blocks"]) == 0
    store = sio.load_store(work / "s.json")
    again = sio.load_store(work / "s.json")
    assert store.scaling is not None
    rng = np.random.default_rng(0)
    for _ in range(20):
        f = rng.uniform(0, 5, store.features.shape[1])
        assert match_cluster(store, f)[0] == match_cluster(again, f)[0]


def test_graph_json_round_trip():
    g, conv = default_graph(), default_conversion()
    g2, conv2 = sio.graph_from_dict(json.loads(json.dumps(sio.graph_to_dict(g, conv))))
    assert g2 == g and conv2 == conv


def test_model_round_trip(small_model, small_trace):
    doc = json.loads(json.dumps(sio.model_to_dict(small_model)))
    again = sio.model_from_dict(doc)
    X = small_model.density_matrix(small_trace[:20])
    assert np.allclose(again.baseline(X), small_model.baseline(X), rtol=0, atol=1e-15)
    assert again.critical == small_model.critical and again.accumulation == small_model.accumulation
    doc["log"] = "log10"
    with pytest.raises(ValueError):
        sio.model_from_dict(doc)


def test_trace_round_trip(tmp_path, small_trace):
    sio.write_trace(tmp_path / "t.jsonl", small_trace[:10])
    assert [f.to_dict() for f in sio.read_trace(tmp_path / "t.jsonl")] == [f.to_dict() for f in small_trace[:10]]
