"""HTTP front end for the pruning toolkit.

Thin wrapper: every route parses one request model, calls the matching
handler and returns its response model. Domain failures (malformed files,
violated invariants, missing paths) map to HTTP 400 with the error kind and
message; anything else is a 500. Paths in requests are resolved on the
service host's filesystem.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import ToolkitError
from . import handlers
from .schemas import (
    BenchRequest,
    BenchResponse,
    EvalRequest,
    EvalResponse,
    GemmBenchRequest,
    GemmBenchResponse,
    HealthResponse,
    InspectRequest,
    InspectResponse,
    PackRequest,
    PackResponse,
    PruneRequest,
    PruneResponse,
    StatsRequest,
    StatsResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="nmprune", version=handlers.handle_health().version)

    @app.exception_handler(ToolkitError)
    async def _toolkit_error(_: Request, exc: ToolkitError) -> JSONResponse:
        return JSONResponse(
            status_code=400,
            content={"kind": type(exc).__name__, "detail": str(exc)},
        )

    @app.exception_handler(FileNotFoundError)
    async def _missing_file(_: Request, exc: FileNotFoundError) -> JSONResponse:
        return JSONResponse(
            status_code=400,
            content={"kind": "FileNotFoundError", "detail": str(exc)},
        )

    @app.get("/v1/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return handlers.handle_health()

    @app.post("/v1/stats", response_model=StatsResponse)
    def stats(req: StatsRequest) -> StatsResponse:
        return handlers.handle_stats(req)

    @app.post("/v1/prune", response_model=PruneResponse)
    def prune(req: PruneRequest) -> PruneResponse:
        return handlers.handle_prune(req)

    @app.post("/v1/pack", response_model=PackResponse)
    def pack(req: PackRequest) -> PackResponse:
        return handlers.handle_pack(req)

    @app.post("/v1/eval", response_model=EvalResponse)
    def evaluate(req: EvalRequest) -> EvalResponse:
        return handlers.handle_eval(req)

    @app.post("/v1/gemm-bench", response_model=GemmBenchResponse)
    def gemm_bench(req: GemmBenchRequest) -> GemmBenchResponse:
        return handlers.handle_gemm_bench(req)

    @app.post("/v1/inspect", response_model=InspectResponse)
    def inspect(req: InspectRequest) -> InspectResponse:
        return handlers.handle_inspect(req)

    @app.post("/v1/bench", response_model=BenchResponse)
    def bench(req: BenchRequest) -> BenchResponse:
        return handlers.handle_bench(req)

    return app


app = create_app()
