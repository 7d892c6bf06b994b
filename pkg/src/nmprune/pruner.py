"""One-shot N:M pruning of weight matrices.

For each layer: score the weights, arrange the input channels (optional
global/local shuffle), zero everything but the n_keep highest-scoring
entries of every m_group-wide group in the arranged order, and report the
reconstruction error of the pruned layer on the calibration activations.
The mask is built in the arranged column space and mapped back through the
permutation, so the stored dense weight and mask stay in original channel
order while every row-group in arranged order holds exactly n_keep
survivors.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ToolkitError, ValidationError
from .metrics import DEFAULT_ALPHA, METRIC_KINDS, MetricMatrix, compute_metric
from .shuffle import (
    DEFAULT_BLOCK_SIZE,
    Permutation,
    SparsityPattern,
    channel_shuffle,
    global_naive_shuffle,
    identity_permutation,
    local_block_shuffle,
    retained_objective,
)
from .stats import compute_stats
from .tensorstore import LayerBundle, Manifest, TensorF, load_bundle, write_tensor

SHUFFLE_MODES = ("none", "global", "full")

DEFAULT_BINS = 100

SUMMARY_COLUMNS = ("layer_id", "metric", "pattern", "recon_error", "retained_fraction", "swaps_applied")


@dataclass(frozen=True)
class ShuffleConfig:
    mode: str = "full"
    block_size: int = DEFAULT_BLOCK_SIZE
    max_iters: int | None = None

    def __post_init__(self):
        if self.mode not in SHUFFLE_MODES:
            raise ValidationError(f"shuffle mode must be one of {SHUFFLE_MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class PruneConfig:
    metric: str = "esparse"
    alpha: float = DEFAULT_ALPHA
    bins: int = DEFAULT_BINS
    pattern: SparsityPattern = field(default_factory=lambda: SparsityPattern(2, 4))
    shuffle: ShuffleConfig = field(default_factory=ShuffleConfig)

    def __post_init__(self):
        if self.metric not in METRIC_KINDS:
            raise ValidationError(f"metric must be one of {METRIC_KINDS}, got {self.metric!r}")
        if self.alpha < 0:
            raise ValidationError(f"alpha must be >= 0, got {self.alpha}")
        if self.bins < 2:
            raise ValidationError(f"bins must be >= 2, got {self.bins}")
        if self.shuffle.block_size % self.pattern.m_group != 0:
            raise ValidationError(
                f"block size {self.shuffle.block_size} must be a multiple of "
                f"group size {self.pattern.m_group}"
            )


@dataclass(frozen=True, eq=False)
class PruneResult:
    layer_id: str
    mask: np.ndarray            # boolean [C_out, C_in], original channel order
    pruned_weight: TensorF      # original channel order, original storage dtype
    permutation: Permutation
    pattern: SparsityPattern
    recon_error: float
    retained_metric_fraction: float

    def mask_arranged(self) -> np.ndarray:
        """Mask with columns in the arranged (permuted) order."""
        return self.mask[:, self.permutation.order]


def nm_mask(scores: np.ndarray, pat: SparsityPattern) -> np.ndarray:
    """Keep the n_keep largest entries of each consecutive m_group-wide group
    per row; ties keep the lower column index. Input is already arranged."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValidationError(f"scores must be 2-D, got shape {scores.shape}")
    rows, channels = scores.shape
    if channels % pat.m_group != 0:
        raise ValidationError(
            f"channel count {channels} is not divisible by group size {pat.m_group}"
        )
    grouped = scores.reshape(rows, channels // pat.m_group, pat.m_group)
    # stable argsort of the negated scores: equal scores keep ascending index
    ranked = np.argsort(-grouped, axis=2, kind="stable")
    mask = np.zeros(grouped.shape, dtype=bool)
    np.put_along_axis(mask, ranked[:, :, :pat.n_keep], True, axis=2)
    return mask.reshape(rows, channels)


def reconstruction_error(weight, pruned_weight, activations) -> float:
    """Frobenius norm of X @ W^T - X @ W_pruned^T, accumulated in f32."""
    w = weight.to_f32() if isinstance(weight, TensorF) else np.asarray(weight, dtype=np.float32)
    wp = (pruned_weight.to_f32() if isinstance(pruned_weight, TensorF)
          else np.asarray(pruned_weight, dtype=np.float32))
    x = (activations.to_f32() if isinstance(activations, TensorF)
         else np.asarray(activations, dtype=np.float32))
    if w.shape != wp.shape:
        raise ValidationError(f"weight shapes differ: {w.shape} vs {wp.shape}")
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ValidationError(
            f"activations {x.shape} are incompatible with weight {w.shape}"
        )
    diff = (x @ w.T - x @ wp.T).astype(np.float64)
    return float(np.sqrt(np.sum(diff * diff)))


def _arrange(xi: MetricMatrix, cfg: ShuffleConfig, pat: SparsityPattern) -> Permutation:
    channels = xi.scores.shape[1]
    identity = identity_permutation(channels)
    identity_obj = retained_objective(xi, identity, pat)
    if cfg.mode == "none":
        return Permutation(
            order=identity, global_applied=False, local_applied=False,
            objective_before=identity_obj, objective_after=identity_obj,
        )
    if cfg.mode == "global":
        perm = global_naive_shuffle(xi, pat)
        # same guardrail as the full pipeline: never do worse than identity
        if perm.objective_after < identity_obj:
            return Permutation(
                order=identity, global_applied=False, local_applied=False,
                objective_before=identity_obj, objective_after=identity_obj,
            )
        return perm
    return channel_shuffle(xi, pat, block_size=cfg.block_size, max_iters=cfg.max_iters)


def prune_layer(bundle: LayerBundle, config: PruneConfig | None = None) -> PruneResult:
    config = config or PruneConfig()
    pat = config.pattern
    weight = bundle.weight
    channels = weight.shape[1]
    if channels % pat.m_group != 0:
        raise ValidationError(
            f"{bundle.layer_id}: channel count {channels} is not divisible by "
            f"group size {pat.m_group}"
        )
    if config.metric == "magnitude":
        stats = None
    else:
        stats = compute_stats(bundle.calib_activations, bins=config.bins)
    xi = compute_metric(weight, config.metric, stats=stats, alpha=config.alpha)
    perm = _arrange(xi, config.shuffle, pat)

    arranged_scores = xi.scores[:, perm.order]
    mask_arranged = nm_mask(arranged_scores, pat)
    mask = np.empty_like(mask_arranged)
    mask[:, perm.order] = mask_arranged

    pruned_data = np.where(mask, weight.data, weight.data.dtype.type(0))
    pruned = TensorF(dtype=weight.dtype, shape=weight.shape, data=pruned_data)
    recon = reconstruction_error(weight, pruned, bundle.calib_activations)
    total = float(xi.scores.sum())
    retained = retained_objective(xi, perm.order, pat)
    fraction = retained / total if total > 0 else 1.0
    return PruneResult(
        layer_id=bundle.layer_id,
        mask=mask,
        pruned_weight=pruned,
        permutation=perm,
        pattern=pat,
        recon_error=recon,
        retained_metric_fraction=fraction,
    )


class ModelPruneError(ToolkitError):
    """A layer failed; carries the ids already completed for reporting."""

    def __init__(self, layer_id: str, completed: list[str], cause: Exception):
        super().__init__(f"layer {layer_id!r} failed: {cause}")
        self.layer_id = layer_id
        self.completed = completed
        self.cause = cause


def summary_rows(results: list[PruneResult], metric: str) -> list[dict]:
    rows = []
    for res in results:
        rows.append({
            "layer_id": res.layer_id,
            "metric": metric,
            "pattern": str(res.pattern),
            "recon_error": repr(res.recon_error),
            "retained_fraction": repr(res.retained_metric_fraction),
            "swaps_applied": str(res.permutation.swaps_applied),
        })
    return rows


def write_prune_outputs(results: list[PruneResult], metric: str, out_dir) -> Path:
    """Write per-layer pruned weight, 0/1 mask and permutation plus summary.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for res in results:
        write_tensor(res.pruned_weight, out / f"{res.layer_id}.weight.espt")
        mask_tensor = TensorF.from_array(res.mask.astype(np.float32), dtype="f32")
        write_tensor(mask_tensor, out / f"{res.layer_id}.mask.espt")
        perm_path = out / f"{res.layer_id}.perm.json"
        perm_path.write_text(json.dumps([int(i) for i in res.permutation.order]), encoding="utf-8")
    summary = out / "summary.csv"
    with summary.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(SUMMARY_COLUMNS))
        writer.writeheader()
        for row in summary_rows(results, metric):
            writer.writerow(row)
    return summary


def prune_model(manifest: Manifest, config: PruneConfig | None = None,
                out_dir=None) -> list[PruneResult]:
    """Prune every layer in the manifest; abort on the first failure with a
    report of the layers already completed."""
    config = config or PruneConfig()
    results: list[PruneResult] = []
    for ref in manifest.layers:
        try:
            bundle = load_bundle(manifest, ref.layer_id)
            results.append(prune_layer(bundle, config))
        except Exception as exc:
            raise ModelPruneError(ref.layer_id, [r.layer_id for r in results], exc) from exc
    if out_dir is not None:
        write_prune_outputs(results, config.metric, out_dir)
    return results
