"""Command-line interface.

Each subcommand builds one service request model and executes it, by default
in-process through the same handlers the HTTP service uses; with --server it
posts the request to a running service instead and prints the same report,
so batch scripts and a shared service behave identically.

Exit codes: 0 success, 1 internal or invariant failure (including artifact
files whose invariants fail inspection), 2 usage or input-validation errors.
All commands are deterministic for a given set of flags: repeated runs
produce byte-identical artifact files (timings in benchmark reports are
printed, never written).
"""

from __future__ import annotations

import sys

import click
import pydantic

from .errors import FormatError, ValidationError
from .pruner import ModelPruneError
from .service import handlers
from .service.schemas import (
    BenchRequest,
    BenchResponse,
    EvalRequest,
    EvalResponse,
    GemmBenchRequest,
    GemmBenchResponse,
    InspectRequest,
    InspectResponse,
    PackRequest,
    PackResponse,
    PruneOptions,
    PruneRequest,
    PruneResponse,
    StatsRequest,
    StatsResponse,
)

_USAGE_ERRORS = (FormatError, ValidationError, FileNotFoundError, pydantic.ValidationError)


def _abort(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _remote(server: str, endpoint: str, request, response_type):
    import httpx

    url = server.rstrip("/") + "/v1/" + endpoint
    try:
        reply = httpx.post(url, json=request.model_dump(mode="json"), timeout=600.0)
    except httpx.HTTPError as exc:
        _abort(f"cannot reach {url}: {exc}", 1)
    if reply.status_code == 200:
        return response_type.model_validate(reply.json())
    body = reply.json() if reply.headers.get("content-type", "").startswith("application/json") else {}
    kind = body.get("kind", "")
    detail = body.get("detail", reply.text)
    if reply.status_code in (400, 422) and kind != "ModelPruneError":
        _abort(f"{detail}", 2)
    _abort(f"server returned {reply.status_code}: {detail}", 1)


def _execute(handler, request, endpoint: str, server: str | None, response_type):
    try:
        if server:
            return _remote(server, endpoint, request, response_type)
        return handler(request)
    except _USAGE_ERRORS as exc:
        _abort(str(exc), 2)
    except ModelPruneError as exc:
        code = 2 if isinstance(exc.cause, _USAGE_ERRORS) else 1
        done = ", ".join(exc.completed) if exc.completed else "none"
        _abort(f"{exc} (layers completed: {done})", code)
    except Exception as exc:  # pragma: no cover - internal failures
        _abort(f"internal {type(exc).__name__}: {exc}", 1)


def _build(model_type, **kwargs):
    try:
        return model_type(**kwargs)
    except pydantic.ValidationError as exc:
        _abort(str(exc), 2)


def _echo_files(files) -> None:
    for path in files:
        click.echo(f"wrote {path}")


_server_option = click.option(
    "--server", metavar="URL", default=None,
    help="Post the request to a running service instead of executing in-process.",
)


def _prune_options(fn):
    decorators = [
        click.option("--metric", type=click.Choice(["esparse", "wanda", "magnitude"]),
                     default="esparse", show_default=True, help="Importance metric."),
        click.option("--alpha", type=float, default=70.0, show_default=True,
                     help="Amplitude weight inside the entropy-aware metric."),
        click.option("--bins", type=int, default=100, show_default=True,
                     help="Histogram bins for channel entropy."),
        click.option("--pattern", default="2:4", show_default=True,
                     help="Sparsity pattern N:M (keep N of every M channels)."),
        click.option("--shuffle", type=click.Choice(["none", "global", "full"]),
                     default="full", show_default=True, help="Channel arrangement stage."),
        click.option("--block-size", type=int, default=256, show_default=True,
                     help="Width of the local-search blocks."),
        click.option("--max-iters", type=int, default=None,
                     help="Per-block cap on accepted swaps (default 10x block width)."),
    ]
    for dec in reversed(decorators):
        fn = dec(fn)
    return fn


def _options_from(metric, alpha, bins, pattern, shuffle, block_size, max_iters) -> PruneOptions:
    return _build(
        PruneOptions, metric=metric, alpha=alpha, bins=bins, pattern=pattern,
        shuffle=shuffle, block_size=block_size, max_iters=max_iters,
    )


@click.group()
@click.version_option()
def main() -> None:
    """N:M sparsification toolkit: entropy-aware channel pruning, packed 2:4
    weights and a reference sparse kernel."""


@main.command()
@click.option("--manifest", required=True, type=click.Path(), help="Manifest JSON path.")
@click.option("--bins", type=int, default=100, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Write one <layer_id>.stats.csv per layer here.")
@_server_option
def stats(manifest, bins, out_dir, server):
    """Per-channel entropy/amplitude/min/max of each layer's activations."""
    req = _build(StatsRequest, manifest=manifest, bins=bins, out_dir=out_dir)
    resp = _execute(handlers.handle_stats, req, "stats", server, StatsResponse)
    if out_dir is None:
        for layer in resp.layers:
            click.echo(f"# {layer.layer_id}")
            click.echo(",".join(handlers.STATS_COLUMNS))
            for row in layer.rows:
                click.echo(f"{row.channel},{row.entropy!r},{row.amplitude!r},"
                           f"{row.min!r},{row.max!r}")
    else:
        _echo_files(resp.files)


@main.command()
@click.option("--manifest", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output directory for pruned weights, masks, permutations and summary.csv.")
@_prune_options
@_server_option
def prune(manifest, out_dir, metric, alpha, bins, pattern, shuffle, block_size,
          max_iters, server):
    """Prune every layer in the manifest to the N:M pattern."""
    options = _options_from(metric, alpha, bins, pattern, shuffle, block_size, max_iters)
    req = _build(PruneRequest, manifest=manifest, out_dir=out_dir, options=options)
    resp = _execute(handlers.handle_prune, req, "prune", server, PruneResponse)
    for row in resp.summary:
        click.echo(
            f"{row.layer_id}: pattern {row.pattern} metric {row.metric} "
            f"recon_error {row.recon_error:.6g} retained_fraction "
            f"{row.retained_fraction:.6f} swaps {row.swaps_applied}"
        )
    click.echo(f"wrote {len(resp.files)} files to {out_dir}")


@main.command()
@click.option("--manifest", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output directory for packed .espk weights and pack.csv.")
@_prune_options
@_server_option
def pack(manifest, out_dir, metric, alpha, bins, pattern, shuffle, block_size,
         max_iters, server):
    """Prune and pack every layer into the 2:4 packed container."""
    options = _options_from(metric, alpha, bins, pattern, shuffle, block_size, max_iters)
    req = _build(PackRequest, manifest=manifest, out_dir=out_dir, options=options)
    resp = _execute(handlers.handle_pack, req, "pack", server, PackResponse)
    for row in resp.rows:
        click.echo(
            f"{row.layer_id}: {row.rows}x{row.cols} packed {row.bytes_sparse} bytes "
            f"(dense {row.bytes_dense}, saving {row.memory_saving:.4f})"
        )
    click.echo(f"wrote {len(resp.files)} files to {out_dir}")


@main.command("eval")
@click.option("--manifest", required=True, type=click.Path())
@click.option("--packed", "packed_dir", required=True, type=click.Path(),
              help="Directory holding one <layer_id>.espk per manifest layer.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Also write eval.csv here.")
@_server_option
def eval_cmd(manifest, packed_dir, out_dir, server):
    """Check the packed kernel against a dense masked GEMM and report costs."""
    req = _build(EvalRequest, manifest=manifest, packed_dir=packed_dir, out_dir=out_dir)
    resp = _execute(handlers.handle_eval, req, "eval", server, EvalResponse)
    for row in resp.rows:
        click.echo(
            f"{row.layer_id}: rel_error {row.rel_error:.3e} flop_ratio {row.flop_ratio} "
            f"memory_saving {row.memory_saving:.4f} ({row.tokens} tokens)"
        )
    _echo_files(resp.files)


@main.command("gemm-bench")
@click.option("--rows", type=int, default=512, show_default=True)
@click.option("--cols", type=int, default=512, show_default=True)
@click.option("--tokens", type=int, default=256, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--repeats", type=int, default=5, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Also write gemm_bench.csv (deterministic columns only).")
@_server_option
def gemm_bench(rows, cols, tokens, seed, repeats, out_dir, server):
    """Time the reference sparse kernel against a dense GEMM on random data."""
    req = _build(GemmBenchRequest, rows=rows, cols=cols, tokens=tokens, seed=seed,
                 repeats=repeats, out_dir=out_dir)
    resp = _execute(handlers.handle_gemm_bench, req, "gemm-bench", server, GemmBenchResponse)
    click.echo(
        f"{resp.rows}x{resp.cols} @ {resp.tokens} tokens: rel_error {resp.rel_error:.3e} "
        f"flop_ratio {resp.flop_ratio} memory_saving {resp.memory_saving:.4f}"
    )
    click.echo(
        f"dense {resp.dense_seconds * 1e3:.3f} ms, sparse {resp.sparse_seconds * 1e3:.3f} ms "
        f"(reference kernel, not tuned for speed)"
    )
    _echo_files(resp.files)


@main.command()
@click.argument("path", type=click.Path())
@_server_option
def inspect(path, server):
    """Dump the header of an .espt/.espk file and check its invariants."""
    req = _build(InspectRequest, path=path)
    resp = _execute(handlers.handle_inspect, req, "inspect", server, InspectResponse)
    click.echo(f"kind: {resp.kind}")
    for key, value in resp.header.items():
        click.echo(f"{key}: {value}")
    if resp.ok:
        click.echo("invariants: OK")
    else:
        for violation in resp.violations:
            click.echo(f"invariant violation: {violation}")
        sys.exit(1)


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--tokens", type=int, default=2048, show_default=True)
@click.option("--channels", type=int, default=256, show_default=True)
@click.option("--outlier-fraction", type=float, default=0.05, show_default=True)
@click.option("--outlier-scale", type=float, default=10.0, show_default=True)
@click.option("--std-profile", type=click.Choice(["iid", "smooth_adjacent"]),
              default="smooth_adjacent", show_default=True)
@click.option("--out-features", type=int, default=None)
@click.option("--weight-scale", type=float, default=1.0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Also write ablation.csv here.")
@_prune_options
@_server_option
def bench(seed, tokens, channels, outlier_fraction, outlier_scale, std_profile,
          out_features, weight_scale, out_dir, metric, alpha, bins, pattern,
          shuffle, block_size, max_iters, server):
    """Ablation benchmark on a synthetic outlier-channel fixture."""
    options = _options_from(metric, alpha, bins, pattern, shuffle, block_size, max_iters)
    req = _build(
        BenchRequest, seed=seed, tokens=tokens, channels=channels,
        outlier_fraction=outlier_fraction, outlier_scale=outlier_scale,
        std_profile=std_profile, out_features=out_features,
        weight_scale=weight_scale, options=options, out_dir=out_dir,
    )
    resp = _execute(handlers.handle_bench, req, "bench", server, BenchResponse)
    click.echo(f"layer {resp.layer_id}: {','.join(handlers.ABLATION_COLUMNS)}")
    for row in resp.rows:
        click.echo(
            f"{row.config},{row.metric},{row.shuffle},"
            f"{row.recon_error:.6g},{row.retained_fraction:.6f}"
        )
    _echo_files(resp.files)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8032, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
