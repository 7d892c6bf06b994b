"""Operation handlers shared by the HTTP service and the CLI.

Each handler turns one request model into one response model, reading and
writing artifact files as a side effect when the request names an output
directory. Handlers raise the package's FormatError/ValidationError (or
FileNotFoundError) for bad inputs; callers map those to HTTP 400 or CLI
exit code 2. All handlers are deterministic: the same request produces
byte-identical artifact files.
"""

from __future__ import annotations

import csv
import struct
import time
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import FormatError, ValidationError
from ..pruner import (
    PruneConfig,
    ShuffleConfig,
    prune_layer,
    prune_model,
    summary_rows,
)
from ..sparse_exec import (
    ESPK_MAGIC,
    account,
    pack,
    packed_violations,
    read_packed,
    sparse_gemm,
    unpack,
    write_packed,
)
from ..stats import compute_stats
from ..synth import ABLATION_COLUMNS, SynthSpec, ablation_run, generate
from ..tensorstore import (
    ESPT_MAGIC,
    LayerBundle,
    TensorF,
    load_bundle,
    load_manifest,
    read_tensor,
)
from .schemas import (
    AblationRow,
    BenchRequest,
    BenchResponse,
    ChannelStatsRow,
    EvalRequest,
    EvalResponse,
    EvalRow,
    GemmBenchRequest,
    GemmBenchResponse,
    HealthResponse,
    InspectRequest,
    InspectResponse,
    LayerStats,
    PackRequest,
    PackResponse,
    PackRow,
    PruneRequest,
    PruneResponse,
    StatsRequest,
    StatsResponse,
    SummaryRow,
)

STATS_COLUMNS = ("channel", "entropy", "amplitude", "min", "max")

PACK_COLUMNS = ("layer_id", "rows", "cols", "bytes_sparse", "bytes_dense", "memory_saving")

EVAL_COLUMNS = ("layer_id", "tokens", "rel_error", "flop_ratio", "flops_sparse",
                "flops_dense", "bytes_sparse", "bytes_dense", "memory_saving")

GEMM_BENCH_COLUMNS = ("rows", "cols", "tokens", "rel_error", "flop_ratio", "memory_saving")


def _write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row[k]) for k in columns})


def _cell(value):
    # repr() keeps float cells lossless and byte-stable across runs
    return repr(value) if isinstance(value, float) else value


def handle_health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


def handle_stats(req: StatsRequest) -> StatsResponse:
    manifest = load_manifest(req.manifest)
    out = Path(req.out_dir) if req.out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    layers, files = [], []
    for layer_id in manifest.layer_ids():
        bundle = load_bundle(manifest, layer_id)
        stats = compute_stats(bundle.calib_activations, bins=req.bins)
        rows = [
            ChannelStatsRow(
                channel=c,
                entropy=float(stats.entropy[c]),
                amplitude=float(stats.amplitude[c]),
                min=float(stats.minimum[c]),
                max=float(stats.maximum[c]),
            )
            for c in range(stats.channel_count)
        ]
        layers.append(LayerStats(layer_id=layer_id, rows=rows))
        if out is not None:
            path = out / f"{layer_id}.stats.csv"
            _write_csv(path, STATS_COLUMNS, [r.model_dump() for r in rows])
            files.append(str(path))
    return StatsResponse(layers=layers, files=files)


def handle_prune(req: PruneRequest) -> PruneResponse:
    manifest = load_manifest(req.manifest)
    config = req.options.to_config()
    results = prune_model(manifest, config, out_dir=req.out_dir)
    out = Path(req.out_dir)
    files = sorted(str(p) for p in out.iterdir())
    summary = [
        SummaryRow(
            layer_id=row["layer_id"],
            metric=row["metric"],
            pattern=row["pattern"],
            recon_error=float(row["recon_error"]),
            retained_fraction=float(row["retained_fraction"]),
            swaps_applied=int(row["swaps_applied"]),
        )
        for row in summary_rows(results, config.metric)
    ]
    return PruneResponse(summary=summary, files=files)


def handle_pack(req: PackRequest) -> PackResponse:
    manifest = load_manifest(req.manifest)
    config = req.options.to_config()
    out = Path(req.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, files = [], []
    for layer_id in manifest.layer_ids():
        bundle = load_bundle(manifest, layer_id)
        packed = pack(prune_layer(bundle, config))
        path = out / f"{layer_id}.espk"
        write_packed(packed, path)
        files.append(str(path))
        acc = account(packed, tokens=bundle.calib_activations.shape[0])
        rows.append(PackRow(
            layer_id=layer_id,
            rows=packed.rows,
            cols=packed.cols,
            bytes_sparse=acc["bytes_sparse"],
            bytes_dense=acc["bytes_dense"],
            memory_saving=acc["memory_saving"],
        ))
    summary = out / "pack.csv"
    _write_csv(summary, PACK_COLUMNS, [r.model_dump() for r in rows])
    files.append(str(summary))
    return PackResponse(rows=rows, files=sorted(files))


def _gemm_rel_error(packed, activations) -> float:
    """Relative Frobenius gap between the packed kernel and a dense masked
    GEMM on the same (f16-rounded) values, computed in f64."""
    x = (activations.to_f32() if isinstance(activations, TensorF)
         else np.asarray(activations, dtype=np.float32))
    got = sparse_gemm(packed, x).data.astype(np.float64)
    dense = unpack(packed).astype(np.float64)
    x_arranged = x.astype(np.float64)[:, packed.permutation]
    want = x_arranged @ dense.T
    norm = float(np.linalg.norm(want))
    if norm == 0.0:
        return float(np.linalg.norm(got))
    return float(np.linalg.norm(got - want) / norm)


def handle_eval(req: EvalRequest) -> EvalResponse:
    manifest = load_manifest(req.manifest)
    packed_dir = Path(req.packed_dir)
    rows, files = [], []
    for layer_id in manifest.layer_ids():
        bundle = load_bundle(manifest, layer_id)
        packed = read_packed(packed_dir / f"{layer_id}.espk")
        if packed.cols != bundle.weight.shape[1]:
            raise ValidationError(
                f"{layer_id}: packed weight has {packed.cols} channels but the "
                f"manifest layer has {bundle.weight.shape[1]}"
            )
        tokens = bundle.calib_activations.shape[0]
        acc = account(packed, tokens=tokens)
        rows.append(EvalRow(
            layer_id=layer_id,
            tokens=tokens,
            rel_error=_gemm_rel_error(packed, bundle.calib_activations),
            flop_ratio=acc["flop_ratio"],
            flops_sparse=acc["flops_sparse"],
            flops_dense=acc["flops_dense"],
            bytes_sparse=acc["bytes_sparse"],
            bytes_dense=acc["bytes_dense"],
            memory_saving=acc["memory_saving"],
        ))
    if req.out_dir:
        out = Path(req.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "eval.csv"
        _write_csv(path, EVAL_COLUMNS, [r.model_dump() for r in rows])
        files.append(str(path))
    return EvalResponse(rows=rows, files=files)


def handle_gemm_bench(req: GemmBenchRequest) -> GemmBenchResponse:
    if req.cols % 4 != 0:
        raise ValidationError(f"column count {req.cols} is not divisible by 4")
    rng = np.random.default_rng(req.seed)
    weight = rng.standard_normal((req.rows, req.cols)).astype(np.float16)
    x = rng.standard_normal((req.tokens, req.cols)).astype(np.float32)
    bundle = LayerBundle(
        layer_id=f"gemm-bench-{req.seed}",
        weight=TensorF.from_array(weight, dtype="f16"),
        calib_activations=TensorF.from_array(x, dtype="f32"),
    )
    config = PruneConfig(metric="magnitude", shuffle=ShuffleConfig(mode="none"))
    result = prune_layer(bundle, config)
    packed = pack(result)

    dense_w = result.pruned_weight.to_f32()
    dense_seconds, sparse_seconds = [], []
    for _ in range(req.repeats):
        t0 = time.perf_counter()
        x @ dense_w.T
        dense_seconds.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        sparse_gemm(packed, x)
        sparse_seconds.append(time.perf_counter() - t0)

    acc = account(packed, tokens=req.tokens)
    resp = GemmBenchResponse(
        rows=req.rows,
        cols=req.cols,
        tokens=req.tokens,
        rel_error=_gemm_rel_error(packed, x),
        flop_ratio=acc["flop_ratio"],
        memory_saving=acc["memory_saving"],
        dense_seconds=min(dense_seconds),
        sparse_seconds=min(sparse_seconds),
    )
    if req.out_dir:
        out = Path(req.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "gemm_bench.csv"
        # timings stay out of the artifact so repeated runs are byte-identical
        _write_csv(path, GEMM_BENCH_COLUMNS,
                   [{k: getattr(resp, k) for k in GEMM_BENCH_COLUMNS}])
        resp = resp.model_copy(update={"files": [str(path)]})
    return resp


def _inspect_espt(path: Path) -> InspectResponse:
    raw = path.read_bytes()
    if len(raw) < 10:
        raise FormatError(f"{path}: header truncated, got {len(raw)} bytes")
    version, dtype_code, rank = struct.unpack_from("<IBB", raw, 4)
    header: dict[str, object] = {"version": version, "dtype_code": dtype_code, "rank": rank}
    violations = []
    try:
        tensor = read_tensor(path)
        header["dtype"] = tensor.dtype
        header["shape"] = list(tensor.shape)
    except ValidationError as exc:
        violations.append(str(exc))
    return InspectResponse(kind="espt", header=header,
                           violations=violations, ok=not violations)


def _inspect_espk(path: Path) -> InspectResponse:
    raw = path.read_bytes()
    head = 4 + struct.calcsize("<IQQBBQ")
    if len(raw) < head:
        raise FormatError(f"{path}: header truncated, got {len(raw)} bytes")
    version, rows, cols, n_keep, m_group, perm_len = struct.unpack_from("<IQQBBQ", raw, 4)
    header: dict[str, object] = {
        "version": version, "rows": rows, "cols": cols,
        "pattern": f"{n_keep}:{m_group}", "perm_len": perm_len,
    }
    violations = []
    try:
        packed = read_packed(path)
        violations.extend(packed_violations(packed))
    except ValidationError as exc:
        violations.append(str(exc))
    return InspectResponse(kind="espk", header=header,
                           violations=violations, ok=not violations)


def handle_inspect(req: InspectRequest) -> InspectResponse:
    path = Path(req.path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open("rb") as fh:
        magic = fh.read(4)
    if magic == ESPT_MAGIC:
        return _inspect_espt(path)
    if magic == ESPK_MAGIC:
        return _inspect_espk(path)
    raise FormatError(f"{path}: unrecognized magic {magic!r}")


def handle_bench(req: BenchRequest) -> BenchResponse:
    spec = SynthSpec(
        seed=req.seed,
        tokens=req.tokens,
        channels=req.channels,
        outlier_fraction=req.outlier_fraction,
        outlier_scale=req.outlier_scale,
        std_profile=req.std_profile,
        out_features=req.out_features,
        weight_scale=req.weight_scale,
    )
    bundle = generate(spec)
    config = req.options.to_config()
    rows = ablation_run(
        bundle,
        config.pattern,
        alpha=config.alpha,
        bins=config.bins,
        block_size=config.shuffle.block_size,
        max_iters=config.shuffle.max_iters,
    )
    files = []
    if req.out_dir:
        out = Path(req.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "ablation.csv"
        _write_csv(path, ABLATION_COLUMNS, rows)
        files.append(str(path))
    return BenchResponse(
        layer_id=bundle.layer_id,
        rows=[AblationRow(**row) for row in rows],
        files=files,
    )
