"""Dense tensor files (ESPT) and the layer-bundle manifest.

ESPT is a minimal little-endian binary container for one dense row-major
tensor:

    magic   4 bytes  b"ESPT"
    version u32      currently 1
    dtype   u8       0 = f32, 1 = f16
    rank    u8       number of dimensions, >= 1
    dims    rank*u64 dimension sizes, each >= 1
    data    raw little-endian element bytes, row-major

A 2x2 f32 tensor therefore occupies 4+4+1+1+16+16 = 42 bytes. Readers
reject unknown magic/version, truncated payloads (reporting expected vs
actual byte counts) and non-finite elements (reporting the first offending
flat index).

The manifest is a UTF-8 JSON file that ties layer ids to a weight tensor
and its captured calibration activations:

    {"model_name": ..., "token_count": ...,
     "layers": [{"layer_id": ..., "weight_path": ..., "activation_path": ...}]}

Relative paths are resolved against the manifest's own directory.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

ESPT_MAGIC = b"ESPT"
ESPT_VERSION = 1

_DTYPE_TO_CODE = {"f32": 0, "f16": 1}
_CODE_TO_DTYPE = {0: "f32", 1: "f16"}
_DTYPE_TO_NUMPY = {"f32": np.dtype("<f4"), "f16": np.dtype("<f2")}


@dataclass(frozen=True, eq=False)
class TensorF:
    """A dense row-major tensor with an explicit storage dtype tag."""

    dtype: str
    shape: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self):
        if self.dtype not in _DTYPE_TO_CODE:
            raise ValidationError(f"unsupported dtype {self.dtype!r}")
        if len(self.shape) < 1:
            raise ValidationError("tensor rank must be >= 1")
        if any(int(d) < 1 for d in self.shape):
            raise ValidationError(f"dimension sizes must be >= 1, got {self.shape}")
        count = 1
        for d in self.shape:
            count *= int(d)
        if count >= 2**64:
            raise ValidationError("element count overflows 64 bits")
        if self.data.dtype != _DTYPE_TO_NUMPY[self.dtype]:
            object.__setattr__(
                self, "data", np.ascontiguousarray(self.data, dtype=_DTYPE_TO_NUMPY[self.dtype])
            )
        if tuple(self.data.shape) != tuple(self.shape):
            raise ValidationError(
                f"data shape {self.data.shape} does not match declared shape {self.shape}"
            )
        if not np.isfinite(self.data).all():
            idx = int(np.flatnonzero(~np.isfinite(self.data.reshape(-1)))[0])
            raise ValidationError(f"non-finite element at flat index {idx}")

    @classmethod
    def from_array(cls, arr, dtype: str | None = None) -> "TensorF":
        arr = np.asarray(arr)
        if dtype is None:
            dtype = "f16" if arr.dtype == np.float16 else "f32"
        return cls(dtype=dtype, shape=tuple(arr.shape), data=np.ascontiguousarray(arr, dtype=_DTYPE_TO_NUMPY[dtype]))

    def to_f32(self) -> np.ndarray:
        """All computation runs in f32 regardless of the storage dtype."""
        return np.ascontiguousarray(self.data, dtype=np.float32)


def write_tensor(tensor: TensorF, path) -> None:
    path = Path(path)
    header = ESPT_MAGIC + struct.pack("<IBB", ESPT_VERSION, _DTYPE_TO_CODE[tensor.dtype], len(tensor.shape))
    dims = b"".join(struct.pack("<Q", int(d)) for d in tensor.shape)
    payload = np.ascontiguousarray(tensor.data, dtype=_DTYPE_TO_NUMPY[tensor.dtype]).tobytes()
    path.write_bytes(header + dims + payload)


def read_tensor(path) -> TensorF:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read tensor file {path}: {exc}") from exc
    if len(raw) < 10:
        raise FormatError(f"{path}: header truncated, expected at least 10 bytes, got {len(raw)}")
    if raw[:4] != ESPT_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {ESPT_MAGIC!r}")
    version, dtype_code, rank = struct.unpack_from("<IBB", raw, 4)
    if version != ESPT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype_code not in _CODE_TO_DTYPE:
        raise FormatError(f"{path}: unknown dtype code {dtype_code}")
    if rank < 1:
        raise FormatError(f"{path}: rank must be >= 1, got {rank}")
    offset = 10
    if len(raw) < offset + 8 * rank:
        raise FormatError(
            f"{path}: dims truncated, expected {offset + 8 * rank} header bytes, got {len(raw)}"
        )
    shape = struct.unpack_from(f"<{rank}Q", raw, offset)
    offset += 8 * rank
    if any(d < 1 for d in shape):
        raise FormatError(f"{path}: dimension sizes must be >= 1, got {shape}")
    count = 1
    for d in shape:
        count *= d
        if count >= 2**64:
            raise FormatError(f"{path}: element count overflows 64 bits")
    dtype = _CODE_TO_DTYPE[dtype_code]
    expected = offset + count * _DTYPE_TO_NUMPY[dtype].itemsize
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(raw)}")
    data = np.frombuffer(raw, dtype=_DTYPE_TO_NUMPY[dtype], count=count, offset=offset).reshape(shape)
    if not np.isfinite(data).all():
        idx = int(np.flatnonzero(~np.isfinite(data.reshape(-1)))[0])
        raise ValidationError(f"{path}: non-finite element at flat index {idx}")
    return TensorF(dtype=dtype, shape=tuple(int(d) for d in shape), data=data.copy())


@dataclass(frozen=True)
class LayerRef:
    layer_id: str
    weight_path: str
    activation_path: str


@dataclass(frozen=True)
class Manifest:
    model_name: str
    layers: tuple[LayerRef, ...]
    token_count: int
    root: Path

    def layer_ids(self) -> list[str]:
        return [l.layer_id for l in self.layers]

    def find(self, layer_id: str) -> LayerRef:
        for ref in self.layers:
            if ref.layer_id == layer_id:
                return ref
        raise ValidationError(f"layer id {layer_id!r} not present in manifest")

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: manifest root must be a JSON object")
    for key in ("model_name", "layers", "token_count"):
        if key not in doc:
            raise FormatError(f"{path}: manifest missing required key {key!r}")
    if not isinstance(doc["layers"], list):
        raise FormatError(f"{path}: 'layers' must be a list")
    token_count = doc["token_count"]
    if not isinstance(token_count, int) or token_count < 0:
        raise ValidationError(f"{path}: token_count must be a non-negative integer")
    refs = []
    seen = set()
    root = path.resolve().parent
    for i, entry in enumerate(doc["layers"]):
        if not isinstance(entry, dict):
            raise FormatError(f"{path}: layer entry {i} must be an object")
        for key in ("layer_id", "weight_path", "activation_path"):
            if key not in entry or not isinstance(entry[key], str):
                raise FormatError(f"{path}: layer entry {i} missing string key {key!r}")
        lid = entry["layer_id"]
        if lid in seen:
            raise ValidationError(f"{path}: duplicate layer id {lid!r}")
        seen.add(lid)
        ref = LayerRef(lid, entry["weight_path"], entry["activation_path"])
        for rel in (ref.weight_path, ref.activation_path):
            target = Path(rel)
            target = target if target.is_absolute() else root / rel
            if not target.is_file():
                raise ValidationError(f"{path}: layer {lid!r} references missing file {target}")
        refs.append(ref)
    return Manifest(
        model_name=str(doc["model_name"]),
        layers=tuple(refs),
        token_count=token_count,
        root=root,
    )


@dataclass(frozen=True, eq=False)
class LayerBundle:
    """One prunable layer: weight [C_out, C_in] plus calibration activations [T, C_in]."""

    layer_id: str
    weight: TensorF
    calib_activations: TensorF

    def __post_init__(self):
        if len(self.weight.shape) != 2:
            raise ValidationError(f"{self.layer_id}: weight must be 2-D, got shape {self.weight.shape}")
        if len(self.calib_activations.shape) != 2:
            raise ValidationError(
                f"{self.layer_id}: activations must be 2-D, got shape {self.calib_activations.shape}"
            )
        if self.weight.shape[1] != self.calib_activations.shape[1]:
            raise ValidationError(
                f"{self.layer_id}: weight has {self.weight.shape[1]} input channels "
                f"but activations have {self.calib_activations.shape[1]}"
            )
        if self.calib_activations.shape[0] < 1:
            raise ValidationError(f"{self.layer_id}: need at least one calibration token")


def load_bundle(manifest: Manifest, layer_id: str) -> LayerBundle:
    ref = manifest.find(layer_id)
    weight = read_tensor(manifest.resolve(ref.weight_path))
    acts = read_tensor(manifest.resolve(ref.activation_path))
    return LayerBundle(layer_id=layer_id, weight=weight, calib_activations=acts)
