import json
import struct

import numpy as np
import pytest

from nmprune.errors import FormatError, ValidationError
from nmprune.tensorstore import (
    LayerBundle,
    TensorF,
    load_bundle,
    load_manifest,
    read_tensor,
    write_tensor,
)


def test_f32_2x2_writes_42_bytes(tmp_path):
    t = TensorF.from_array(np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32))
    path = tmp_path / "t.espt"
    write_tensor(t, path)
    raw = path.read_bytes()
    assert len(raw) == 42
    assert raw[:4] == b"ESPT"
    version, dtype_code, rank = struct.unpack_from("<IBB", raw, 4)
    assert (version, dtype_code, rank) == (1, 0, 2)
    assert struct.unpack_from("<QQ", raw, 10) == (2, 2)
    assert np.frombuffer(raw, dtype="<f4", offset=26).tolist() == [1.0, 2.0, 3.0, 4.0]


@pytest.mark.parametrize("dtype", ["f32", "f16"])
def test_seeded_round_trips_preserve_bits(tmp_path, dtype):
    np_dtype = np.float32 if dtype == "f32" else np.float16
    for seed in range(50):
        rng = np.random.default_rng(seed)
        rank = int(rng.integers(1, 4))
        shape = tuple(int(rng.integers(1, 9)) for _ in range(rank))
        arr = rng.standard_normal(shape).astype(np_dtype)
        t = TensorF.from_array(arr, dtype=dtype)
        path = tmp_path / f"{dtype}-{seed}.espt"
        write_tensor(t, path)
        back = read_tensor(path)
        assert back.dtype == dtype
        assert back.shape == shape
        assert back.data.tobytes() == arr.tobytes()


def test_zero_rank_rejected():
    with pytest.raises(ValidationError):
        TensorF(dtype="f32", shape=(), data=np.float32(1.0).reshape(()))


def test_zero_sized_dimension_rejected():
    with pytest.raises(ValidationError):
        TensorF.from_array(np.zeros((0, 4), dtype=np.float32))


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.espt"
    path.write_bytes(b"XSPT" + b"\x00" * 38)
    with pytest.raises(FormatError, match="magic"):
        read_tensor(path)


def test_unsupported_version_rejected(tmp_path):
    path = tmp_path / "v9.espt"
    path.write_bytes(b"ESPT" + struct.pack("<IBB", 9, 0, 1) + struct.pack("<Q", 1) + b"\x00" * 4)
    with pytest.raises(FormatError, match="version"):
        read_tensor(path)


def test_truncated_payload_reports_expected_and_actual(tmp_path):
    t = TensorF.from_array(np.arange(12, dtype=np.float32).reshape(3, 4))
    path = tmp_path / "t.espt"
    write_tensor(t, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(FormatError) as exc:
        read_tensor(path)
    assert str(len(raw)) in str(exc.value)
    assert str(len(raw) - 5) in str(exc.value)


def test_nan_payload_rejected_with_flat_index(tmp_path):
    data = np.array([1.0, 2.0, 3.0, np.nan, 5.0, 6.0], dtype="<f4")
    raw = b"ESPT" + struct.pack("<IBB", 1, 0, 2) + struct.pack("<QQ", 2, 3) + data.tobytes()
    path = tmp_path / "nan.espt"
    path.write_bytes(raw)
    with pytest.raises(ValidationError, match="index 3"):
        read_tensor(path)


def test_inf_payload_rejected(tmp_path):
    data = np.array([np.inf, 0.0], dtype="<f4")
    raw = b"ESPT" + struct.pack("<IBB", 1, 0, 1) + struct.pack("<Q", 2) + data.tobytes()
    path = tmp_path / "inf.espt"
    path.write_bytes(raw)
    with pytest.raises(ValidationError, match="index 0"):
        read_tensor(path)


def test_tensor_constructor_rejects_non_finite():
    with pytest.raises(ValidationError):
        TensorF.from_array(np.array([1.0, np.nan], dtype=np.float32))


def _write_manifest(tmp_path, layers, token_count=16, model_name="toy"):
    doc = {"model_name": model_name, "token_count": token_count, "layers": layers}
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def _make_layer_files(tmp_path, layer_id, c_out=4, c_in=8, tokens=16, seed=0):
    rng = np.random.default_rng(seed)
    write_tensor(TensorF.from_array(rng.standard_normal((c_out, c_in)).astype(np.float32)),
                 tmp_path / f"{layer_id}.weight.espt")
    write_tensor(TensorF.from_array(rng.standard_normal((tokens, c_in)).astype(np.float32)),
                 tmp_path / f"{layer_id}.act.espt")
    return {
        "layer_id": layer_id,
        "weight_path": f"{layer_id}.weight.espt",
        "activation_path": f"{layer_id}.act.espt",
    }


def test_manifest_round_trip_and_bundle_load(tmp_path):
    layers = [_make_layer_files(tmp_path, "l0", seed=0), _make_layer_files(tmp_path, "l1", seed=1)]
    manifest = load_manifest(_write_manifest(tmp_path, layers))
    assert manifest.model_name == "toy"
    assert manifest.layer_ids() == ["l0", "l1"]
    bundle = load_bundle(manifest, "l1")
    assert bundle.weight.shape == (4, 8)
    assert bundle.calib_activations.shape == (16, 8)


def test_manifest_missing_file_rejected(tmp_path):
    layers = [_make_layer_files(tmp_path, "l0")]
    layers[0]["weight_path"] = "does-not-exist.espt"
    with pytest.raises(ValidationError, match="missing file"):
        load_manifest(_write_manifest(tmp_path, layers))


def test_manifest_duplicate_layer_id_rejected(tmp_path):
    layers = [_make_layer_files(tmp_path, "l0"), _make_layer_files(tmp_path, "l0")]
    with pytest.raises(ValidationError, match="duplicate"):
        load_manifest(_write_manifest(tmp_path, layers))


def test_manifest_negative_token_count_rejected(tmp_path):
    layers = [_make_layer_files(tmp_path, "l0")]
    with pytest.raises(ValidationError, match="token_count"):
        load_manifest(_write_manifest(tmp_path, layers, token_count=-1))


def test_manifest_broken_json_rejected(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(FormatError, match="JSON"):
        load_manifest(path)


def test_unknown_layer_id_rejected(tmp_path):
    layers = [_make_layer_files(tmp_path, "l0")]
    manifest = load_manifest(_write_manifest(tmp_path, layers))
    with pytest.raises(ValidationError, match="nope"):
        load_bundle(manifest, "nope")


def test_bundle_channel_mismatch_rejected():
    weight = TensorF.from_array(np.zeros((4, 8), dtype=np.float32))
    acts = TensorF.from_array(np.zeros((16, 4), dtype=np.float32))
    with pytest.raises(ValidationError, match="channels"):
        LayerBundle(layer_id="bad", weight=weight, calib_activations=acts)


def test_bundle_requires_2d_weight():
    weight = TensorF.from_array(np.zeros(8, dtype=np.float32))
    acts = TensorF.from_array(np.zeros((16, 8), dtype=np.float32))
    with pytest.raises(ValidationError, match="2-D"):
        LayerBundle(layer_id="bad", weight=weight, calib_activations=acts)
