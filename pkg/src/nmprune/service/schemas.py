"""Request/response models for the pruning service.

Every operation the toolkit exposes — channel statistics, pruning, packing,
packed-kernel evaluation, benchmarks and artifact inspection — is described
by one request model and one response model. The CLI builds these requests
and either executes them in-process or posts them to a running service;
paths in a request are resolved on the machine doing the work.

Domain rules (pattern syntax, divisibility, file invariants) are enforced by
the core package so that the error mapping lives in one place; the models
only pin types, ranges and field names.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from ..metrics import DEFAULT_ALPHA
from ..pruner import DEFAULT_BINS, PruneConfig, ShuffleConfig
from ..shuffle import DEFAULT_BLOCK_SIZE, SparsityPattern


class PruneOptions(BaseModel):
    """Scoring and arrangement knobs shared by prune, pack and bench."""

    model_config = ConfigDict(extra="forbid")

    metric: Literal["esparse", "wanda", "magnitude"] = "esparse"
    alpha: float = Field(default=DEFAULT_ALPHA, ge=0.0)
    bins: int = Field(default=DEFAULT_BINS, ge=2)
    pattern: str = "2:4"
    shuffle: Literal["none", "global", "full"] = "full"
    block_size: int = Field(default=DEFAULT_BLOCK_SIZE, ge=1)
    max_iters: int | None = Field(default=None, ge=0)

    def to_config(self) -> PruneConfig:
        return PruneConfig(
            metric=self.metric,
            alpha=self.alpha,
            bins=self.bins,
            pattern=SparsityPattern.parse(self.pattern),
            shuffle=ShuffleConfig(
                mode=self.shuffle, block_size=self.block_size, max_iters=self.max_iters
            ),
        )


class ChannelStatsRow(BaseModel):
    channel: int
    entropy: float
    amplitude: float
    min: float
    max: float


class LayerStats(BaseModel):
    layer_id: str
    rows: list[ChannelStatsRow]


class StatsRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    manifest: str
    bins: int = Field(default=DEFAULT_BINS, ge=2)
    out_dir: str | None = None


class StatsResponse(BaseModel):
    layers: list[LayerStats]
    files: list[str] = []


class SummaryRow(BaseModel):
    layer_id: str
    metric: str
    pattern: str
    recon_error: float
    retained_fraction: float
    swaps_applied: int


class PruneRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    manifest: str
    out_dir: str
    options: PruneOptions = PruneOptions()


class PruneResponse(BaseModel):
    summary: list[SummaryRow]
    files: list[str]


class PackRow(BaseModel):
    layer_id: str
    rows: int
    cols: int
    bytes_sparse: int
    bytes_dense: int
    memory_saving: float


class PackRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    manifest: str
    out_dir: str
    options: PruneOptions = PruneOptions()


class PackResponse(BaseModel):
    rows: list[PackRow]
    files: list[str]


class EvalRow(BaseModel):
    layer_id: str
    tokens: int
    rel_error: float
    flop_ratio: float
    flops_sparse: int
    flops_dense: int
    bytes_sparse: int
    bytes_dense: int
    memory_saving: float


class EvalRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    manifest: str
    packed_dir: str
    out_dir: str | None = None


class EvalResponse(BaseModel):
    rows: list[EvalRow]
    files: list[str] = []


class GemmBenchRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rows: int = Field(default=512, ge=4)
    cols: int = Field(default=512, ge=4)
    tokens: int = Field(default=256, ge=1)
    seed: int = 0
    repeats: int = Field(default=5, ge=1)
    out_dir: str | None = None


class GemmBenchResponse(BaseModel):
    rows: int
    cols: int
    tokens: int
    rel_error: float
    flop_ratio: float
    memory_saving: float
    dense_seconds: float
    sparse_seconds: float
    files: list[str] = []


class InspectRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: str


class InspectResponse(BaseModel):
    kind: Literal["espt", "espk"]
    header: dict[str, object]
    violations: list[str]
    ok: bool


class AblationRow(BaseModel):
    config: str
    metric: str
    shuffle: str
    recon_error: float
    retained_fraction: float


class BenchRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    tokens: int = Field(default=2048, ge=1)
    channels: int = Field(default=256, ge=4)
    outlier_fraction: float = Field(default=0.05, ge=0.0, le=0.1)
    outlier_scale: float = Field(default=10.0, ge=1.0)
    std_profile: Literal["iid", "smooth_adjacent"] = "smooth_adjacent"
    out_features: int | None = Field(default=None, ge=1)
    weight_scale: float = Field(default=1.0, gt=0.0)
    options: PruneOptions = PruneOptions()
    out_dir: str | None = None


class BenchResponse(BaseModel):
    layer_id: str
    rows: list[AblationRow]
    files: list[str] = []


class HealthResponse(BaseModel):
    status: Literal["ok"]
    version: str
