import json
import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from nmprune.service import create_app
from nmprune.tensorstore import TensorF, write_tensor


@pytest.fixture()
def client():
    return TestClient(create_app())


@pytest.fixture()
def model_dir(tmp_path):
    rng = np.random.default_rng(0)
    layers = []
    for i in range(2):
        w = rng.standard_normal((8, 16)).astype(np.float32)
        x = rng.standard_normal((32, 16)).astype(np.float32)
        write_tensor(TensorF.from_array(w), tmp_path / f"l{i}.weight.espt")
        write_tensor(TensorF.from_array(x), tmp_path / f"l{i}.act.espt")
        layers.append({
            "layer_id": f"l{i}",
            "weight_path": f"l{i}.weight.espt",
            "activation_path": f"l{i}.act.espt",
        })
    (tmp_path / "manifest.json").write_text(
        json.dumps({"model_name": "toy", "token_count": 32, "layers": layers}),
        encoding="utf-8",
    )
    return tmp_path


def manifest_of(model_dir) -> str:
    return str(model_dir / "manifest.json")


OPTIONS_16 = {"shuffle": "full", "block_size": 16}


def test_health(client):
    reply = client.get("/v1/health")
    assert reply.status_code == 200
    body = reply.json()
    assert body["status"] == "ok" and body["version"]


def test_stats_rows_and_files(client, model_dir, tmp_path):
    out = tmp_path / "stats"
    reply = client.post("/v1/stats", json={
        "manifest": manifest_of(model_dir), "bins": 100, "out_dir": str(out)})
    assert reply.status_code == 200
    body = reply.json()
    assert [l["layer_id"] for l in body["layers"]] == ["l0", "l1"]
    for layer in body["layers"]:
        assert len(layer["rows"]) == 16
        for row in layer["rows"]:
            assert 0.0 <= row["entropy"] <= math.log(100) + 1e-9
            assert row["amplitude"] >= 0.0
            assert row["min"] <= row["max"]
    lines = (out / "l0.stats.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "channel,entropy,amplitude,min,max"
    assert len(lines) == 17


def test_prune_endpoint(client, model_dir, tmp_path):
    out = tmp_path / "out"
    reply = client.post("/v1/prune", json={
        "manifest": manifest_of(model_dir), "out_dir": str(out),
        "options": OPTIONS_16})
    assert reply.status_code == 200
    body = reply.json()
    assert [r["layer_id"] for r in body["summary"]] == ["l0", "l1"]
    for row in body["summary"]:
        assert row["metric"] == "esparse" and row["pattern"] == "2:4"
        assert row["recon_error"] >= 0.0
        assert 0.0 < row["retained_fraction"] <= 1.0
    names = {p.split("/")[-1] for p in body["files"]}
    assert names == {
        "l0.weight.espt", "l0.mask.espt", "l0.perm.json",
        "l1.weight.espt", "l1.mask.espt", "l1.perm.json", "summary.csv",
    }


def test_pack_then_eval_round_trip(client, model_dir, tmp_path):
    packed = tmp_path / "packed"
    reply = client.post("/v1/pack", json={
        "manifest": manifest_of(model_dir), "out_dir": str(packed),
        "options": OPTIONS_16})
    assert reply.status_code == 200
    rows = reply.json()["rows"]
    assert all(r["memory_saving"] == 1.0 - 0.5625 for r in rows)
    assert (packed / "pack.csv").exists()

    reply = client.post("/v1/eval", json={
        "manifest": manifest_of(model_dir), "packed_dir": str(packed),
        "out_dir": str(tmp_path / "eval")})
    assert reply.status_code == 200
    for row in reply.json()["rows"]:
        assert row["rel_error"] < 1e-5
        assert row["flop_ratio"] == 0.5
        assert row["tokens"] == 32
    header = (tmp_path / "eval" / "eval.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == ("layer_id,tokens,rel_error,flop_ratio,flops_sparse,"
                      "flops_dense,bytes_sparse,bytes_dense,memory_saving")


def test_eval_rejects_channel_mismatch(client, model_dir, tmp_path):
    packed = tmp_path / "packed"
    client.post("/v1/pack", json={
        "manifest": manifest_of(model_dir), "out_dir": str(packed),
        "options": OPTIONS_16})
    # swap in a packed file with a different shape for l1
    rng = np.random.default_rng(9)
    w = rng.standard_normal((4, 8)).astype(np.float32)
    x = rng.standard_normal((8, 8)).astype(np.float32)
    write_tensor(TensorF.from_array(w), tmp_path / "small.weight.espt")
    write_tensor(TensorF.from_array(x), tmp_path / "small.act.espt")
    (tmp_path / "small.json").write_text(json.dumps({
        "model_name": "small", "token_count": 8,
        "layers": [{"layer_id": "small", "weight_path": "small.weight.espt",
                    "activation_path": "small.act.espt"}]}), encoding="utf-8")
    client.post("/v1/pack", json={
        "manifest": str(tmp_path / "small.json"), "out_dir": str(tmp_path / "small_packed"),
        "options": {"shuffle": "none", "block_size": 8}})
    (packed / "l1.espk").write_bytes((tmp_path / "small_packed" / "small.espk").read_bytes())

    reply = client.post("/v1/eval", json={
        "manifest": manifest_of(model_dir), "packed_dir": str(packed)})
    assert reply.status_code == 400
    assert reply.json()["kind"] == "ValidationError"
    assert "l1" in reply.json()["detail"]


def test_gemm_bench_endpoint(client):
    reply = client.post("/v1/gemm-bench", json={
        "rows": 64, "cols": 64, "tokens": 32, "seed": 1, "repeats": 2})
    assert reply.status_code == 200
    body = reply.json()
    assert body["rel_error"] < 1e-5
    assert body["flop_ratio"] == 0.5
    assert body["memory_saving"] == 1.0 - 0.5625
    assert body["dense_seconds"] > 0.0 and body["sparse_seconds"] > 0.0


def test_inspect_endpoint_ok_and_violation(client, model_dir, tmp_path):
    packed = tmp_path / "packed"
    client.post("/v1/pack", json={
        "manifest": manifest_of(model_dir), "out_dir": str(packed),
        "options": OPTIONS_16})
    path = packed / "l0.espk"
    reply = client.post("/v1/inspect", json={"path": str(path)})
    assert reply.status_code == 200
    body = reply.json()
    assert body["kind"] == "espk" and body["ok"]
    assert body["header"]["pattern"] == "2:4"
    assert body["header"]["rows"] == 8 and body["header"]["cols"] == 16

    raw = bytearray(path.read_bytes())
    raw[-1] = 0x00                     # last row, a real group: positions (0, 0)
    bad = tmp_path / "bad.espk"
    bad.write_bytes(bytes(raw))
    reply = client.post("/v1/inspect", json={"path": str(bad)})
    assert reply.status_code == 200
    body = reply.json()
    assert not body["ok"]
    assert "not strictly increasing" in body["violations"][0]


def test_inspect_espt(client, model_dir):
    reply = client.post("/v1/inspect", json={"path": str(model_dir / "l0.weight.espt")})
    assert reply.status_code == 200
    body = reply.json()
    assert body["kind"] == "espt" and body["ok"]
    assert body["header"]["dtype"] == "f32"
    assert body["header"]["shape"] == [8, 16]


def test_bench_endpoint_rows_monotone(client, tmp_path):
    reply = client.post("/v1/bench", json={
        "seed": 0, "tokens": 256, "channels": 64,
        "options": {"block_size": 32}, "out_dir": str(tmp_path / "bench")})
    assert reply.status_code == 200
    body = reply.json()
    assert body["layer_id"] == "synth-0"
    assert [r["config"] for r in body["rows"]] == [
        "norm", "+entropy", "+global_shuffle", "+local_shuffle"]
    fractions = [r["retained_fraction"] for r in body["rows"]]
    assert all(b >= a - 1e-12 for a, b in zip(fractions, fractions[1:]))
    header = (tmp_path / "bench" / "ablation.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "config,metric,shuffle,recon_error,retained_fraction"


def test_error_mapping(client, model_dir, tmp_path):
    reply = client.post("/v1/stats", json={"manifest": str(tmp_path / "none.json")})
    assert reply.status_code == 400
    assert reply.json()["kind"] == "FormatError"

    reply = client.post("/v1/prune", json={
        "manifest": manifest_of(model_dir), "out_dir": str(tmp_path / "x"),
        "options": {"pattern": "4:3"}})
    assert reply.status_code == 400
    assert reply.json()["kind"] == "ValidationError"

    reply = client.post("/v1/inspect", json={"path": str(tmp_path / "ghost.espk")})
    assert reply.status_code == 400
    assert reply.json()["kind"] == "FileNotFoundError"

    reply = client.post("/v1/prune", json={
        "manifest": manifest_of(model_dir), "out_dir": str(tmp_path / "y"),
        "options": {"alpha": -3.0}})
    assert reply.status_code == 422     # schema-level constraint

    reply = client.post("/v1/stats", json={
        "manifest": manifest_of(model_dir), "bogus_field": 1})
    assert reply.status_code == 422
