"""Packed 2:4 weights, the ESPK container, a reference sparse GEMM and
cost accounting.

A 2:4-pruned weight stores only the two survivors of every four arranged
columns: a f16 value buffer of shape [rows, cols/2] plus 2-bit position
indices. Within one group's 4-bit nibble, bits [1:0] hold the position of
the first (lower) kept column and bits [3:2] the second; the low nibble of
each byte belongs to the earlier group and each row's nibble stream is
zero-padded to whole bytes. For even group counts per row the packed size
is therefore exactly 9/16 = 0.5625 of the dense f16 matrix (43.75% saved),
and the multiply touches half the positions (FLOP ratio n/m = 0.5).

ESPK layout, all little-endian:

    magic    4 bytes  b"ESPK"
    version  u32      currently 1
    rows     u64
    cols     u64
    n_keep   u8       2 for this version
    m_group  u8       4 for this version
    perm_len u64      == cols
    perm     perm_len * u32   arranged order: position p holds channel perm[p]
    values   rows * cols/2 * f16
    indices  rows * ceil((cols/4)/2) bytes

sparse_gemm gathers the activation columns through the permutation and
multiplies only the kept positions, accumulating in f32; the result matches
a dense GEMM against the masked dense weight to within 1e-5 relative
Frobenius error.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .pruner import PruneResult
from .shuffle import SparsityPattern
from .tensorstore import TensorF

ESPK_MAGIC = b"ESPK"
ESPK_VERSION = 1

_GEMM_ROW_CHUNK = 64


@dataclass(frozen=True, eq=False)
class PackedSparseWeight:
    rows: int
    cols: int
    pattern: SparsityPattern
    values: np.ndarray        # f16 [rows, cols // 2], arranged order
    indices: np.ndarray       # u8 [rows, bytes per row]
    permutation: np.ndarray   # int64 [cols]

    def __post_init__(self):
        if (self.pattern.n_keep, self.pattern.m_group) != (2, 4):
            raise ValidationError("packed layout only supports the 2:4 pattern")
        if self.cols % 4 != 0:
            raise ValidationError(f"column count {self.cols} is not divisible by 4")
        kept = self.cols // 2
        if self.values.shape != (self.rows, kept):
            raise ValidationError(
                f"values must have shape ({self.rows}, {kept}), got {self.values.shape}"
            )
        bpr = _bytes_per_row(self.cols)
        if self.indices.shape != (self.rows, bpr):
            raise ValidationError(
                f"indices must have shape ({self.rows}, {bpr}), got {self.indices.shape}"
            )
        perm = np.asarray(self.permutation, dtype=np.int64)
        object.__setattr__(self, "permutation", perm)
        if not np.array_equal(np.sort(perm), np.arange(self.cols)):
            raise ValidationError("permutation must be a bijection over columns")


def _bytes_per_row(cols: int) -> int:
    groups = cols // 4
    return (groups + 1) // 2


def _decode_positions(packed: PackedSparseWeight, validate: bool = True):
    """Per-group kept positions (first, second) decoded from the nibble stream."""
    groups = packed.cols // 4
    rows = packed.rows
    idx = packed.indices
    group_cols = np.arange(groups)
    nibbles = (idx[:, group_cols // 2] >> ((group_cols % 2) * 4)) & 0xF
    first = (nibbles & 0x3).astype(np.int64)
    second = ((nibbles >> 2) & 0x3).astype(np.int64)
    if validate:
        bad = first >= second
        if bad.any():
            r, g = np.argwhere(bad)[0]
            raise ValidationError(
                f"index nibble for row {int(r)}, group {int(g)} is not strictly "
                f"increasing: positions ({int(first[r, g])}, {int(second[r, g])})"
            )
        if groups % 2 == 1:
            trailing = idx[:, -1] >> 4
            if np.any(trailing != 0):
                r = int(np.flatnonzero(trailing != 0)[0])
                raise ValidationError(f"trailing pad nibble for row {r} is not zero")
    return first, second


def packed_violations(packed: PackedSparseWeight) -> list[str]:
    """All invariant violations in the packed index stream, as readable text."""
    problems = []
    try:
        _decode_positions(packed, validate=True)
    except ValidationError as exc:
        problems.append(str(exc))
        return problems
    return problems


def pack(result: PruneResult) -> PackedSparseWeight:
    """Pack a 2:4 prune result: kept f16 values in arranged column order plus
    2-bit group positions."""
    pat = result.pattern
    if (pat.n_keep, pat.m_group) != (2, 4):
        raise ValidationError(
            f"only the 2:4 pattern can be packed in this version, got {pat}"
        )
    mask = result.mask_arranged()
    rows, cols = mask.shape
    grouped = mask.reshape(rows, cols // 4, 4)
    counts = grouped.sum(axis=2)
    if np.any(counts != 2):
        r, g = np.argwhere(counts != 2)[0]
        raise ValidationError(
            f"row {int(r)}, group {int(g)} keeps {int(counts[r, g])} values, expected 2"
        )
    # positions of the kept pair in ascending order within each group
    positions = np.argsort(~grouped, axis=2, kind="stable")[:, :, :2]
    arranged = result.pruned_weight.data[:, result.permutation.order]
    values = np.take_along_axis(
        arranged.reshape(rows, cols // 4, 4), positions, axis=2
    ).reshape(rows, cols // 2).astype("<f2")
    nibbles = (positions[:, :, 0] | (positions[:, :, 1] << 2)).astype(np.uint8)
    groups = cols // 4
    if groups % 2 == 1:
        nibbles = np.concatenate([nibbles, np.zeros((rows, 1), dtype=np.uint8)], axis=1)
    packed_bytes = (nibbles[:, 0::2] | (nibbles[:, 1::2] << 4)).astype(np.uint8)
    return PackedSparseWeight(
        rows=rows,
        cols=cols,
        pattern=pat,
        values=values,
        indices=packed_bytes,
        permutation=result.permutation.order.copy(),
    )


def unpack(packed: PackedSparseWeight) -> np.ndarray:
    """Dense f16 [rows, cols] in arranged column order, zeros at pruned spots."""
    first, second = _decode_positions(packed, validate=True)
    rows, cols = packed.rows, packed.cols
    groups = cols // 4
    dense = np.zeros((rows, groups, 4), dtype="<f2")
    vals = packed.values.reshape(rows, groups, 2)
    positions = np.stack([first, second], axis=2)
    np.put_along_axis(dense, positions, vals, axis=2)
    return dense.reshape(rows, cols)


def kept_column_indices(packed: PackedSparseWeight) -> np.ndarray:
    """Arranged-order column index of every kept value, shape [rows, cols//2]."""
    first, second = _decode_positions(packed, validate=True)
    groups = packed.cols // 4
    base = np.arange(groups, dtype=np.int64) * 4
    cols_idx = np.empty((packed.rows, groups, 2), dtype=np.int64)
    cols_idx[:, :, 0] = base[None, :] + first
    cols_idx[:, :, 1] = base[None, :] + second
    return cols_idx.reshape(packed.rows, packed.cols // 2)


def sparse_gemm(packed: PackedSparseWeight, activations) -> TensorF:
    """X @ W^T touching only the kept positions.

    Activation columns are gathered through the stored permutation first;
    accumulation runs in f32.
    """
    x = (activations.to_f32() if isinstance(activations, TensorF)
         else np.asarray(activations, dtype=np.float32))
    if x.ndim != 2:
        raise ValidationError(f"activations must be 2-D, got shape {x.shape}")
    if x.shape[1] != packed.cols:
        raise ValidationError(
            f"activations have {x.shape[1]} channels but packed weight expects {packed.cols}"
        )
    x_arranged = np.ascontiguousarray(x[:, packed.permutation])
    cols_idx = kept_column_indices(packed)
    vals = packed.values.astype(np.float32)
    tokens = x.shape[0]
    out = np.empty((tokens, packed.rows), dtype=np.float32)
    for start in range(0, packed.rows, _GEMM_ROW_CHUNK):
        stop = min(start + _GEMM_ROW_CHUNK, packed.rows)
        gathered = x_arranged[:, cols_idx[start:stop]]        # [T, chunk, kept]
        out[:, start:stop] = np.einsum(
            "trk,rk->tr", gathered, vals[start:stop], optimize=True
        ).astype(np.float32)
    return TensorF.from_array(out, dtype="f32")


def account(packed: PackedSparseWeight, tokens: int) -> dict:
    """FLOP and byte accounting against the dense f16 baseline (headers excluded)."""
    if tokens < 1:
        raise ValidationError(f"token count must be >= 1, got {tokens}")
    n, m = packed.pattern.n_keep, packed.pattern.m_group
    kept = packed.cols * n // m
    flops_sparse = 2 * tokens * packed.rows * kept
    flops_dense = 2 * tokens * packed.rows * packed.cols
    bytes_sparse = int(packed.values.nbytes + packed.indices.nbytes)
    bytes_dense = packed.rows * packed.cols * 2
    return {
        "flops_sparse": flops_sparse,
        "flops_dense": flops_dense,
        "flop_ratio": n / m,
        "bytes_sparse": bytes_sparse,
        "bytes_dense": bytes_dense,
        "memory_saving": 1.0 - bytes_sparse / bytes_dense,
    }


def write_packed(packed: PackedSparseWeight, path) -> None:
    path = Path(path)
    header = ESPK_MAGIC + struct.pack(
        "<IQQBBQ",
        ESPK_VERSION,
        packed.rows,
        packed.cols,
        packed.pattern.n_keep,
        packed.pattern.m_group,
        packed.permutation.size,
    )
    perm = packed.permutation.astype("<u4").tobytes()
    values = np.ascontiguousarray(packed.values, dtype="<f2").tobytes()
    indices = np.ascontiguousarray(packed.indices, dtype=np.uint8).tobytes()
    path.write_bytes(header + perm + values + indices)


def read_packed(path) -> PackedSparseWeight:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read packed file {path}: {exc}") from exc
    head = 4 + struct.calcsize("<IQQBBQ")
    if len(raw) < head:
        raise FormatError(f"{path}: header truncated, expected {head} bytes, got {len(raw)}")
    if raw[:4] != ESPK_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {ESPK_MAGIC!r}")
    version, rows, cols, n_keep, m_group, perm_len = struct.unpack_from("<IQQBBQ", raw, 4)
    if version != ESPK_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if (n_keep, m_group) != (2, 4):
        raise FormatError(f"{path}: unsupported pattern {n_keep}:{m_group}")
    if perm_len != cols:
        raise FormatError(f"{path}: permutation length {perm_len} does not match cols {cols}")
    offset = head
    expected = offset + 4 * perm_len + rows * (cols // 2) * 2 + rows * _bytes_per_row(cols)
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(raw)}")
    perm = np.frombuffer(raw, dtype="<u4", count=perm_len, offset=offset).astype(np.int64)
    offset += 4 * perm_len
    values = np.frombuffer(raw, dtype="<f2", count=rows * (cols // 2), offset=offset)
    values = values.reshape(rows, cols // 2).copy()
    offset += rows * (cols // 2) * 2
    indices = np.frombuffer(raw, dtype=np.uint8, count=rows * _bytes_per_row(cols), offset=offset)
    indices = indices.reshape(rows, _bytes_per_row(cols)).copy()
    if not np.isfinite(values.astype(np.float32)).all():
        flat = int(np.flatnonzero(~np.isfinite(values.astype(np.float32)).reshape(-1))[0])
        raise ValidationError(f"{path}: non-finite packed value at flat index {flat}")
    return PackedSparseWeight(
        rows=int(rows),
        cols=int(cols),
        pattern=SparsityPattern(int(n_keep), int(m_group)),
        values=values,
        indices=indices,
        permutation=perm,
    )
