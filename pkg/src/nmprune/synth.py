"""Synthetic calibration fixtures and the ablation harness.

generate() builds a seeded layer bundle whose activation channels follow a
chosen standard-deviation profile ("iid" draws each channel's std
independently; "smooth_adjacent" interpolates a coarse random curve so
neighboring channels have nearly equal stds). A designated fraction of
channels is turned into outliers by multiplicative scaling until their
amplitude reaches at least outlier_scale times the median channel
amplitude; with the smooth profile the outlier channels form one contiguous
run, which concentrates importance the way adjacent high-variance channels
do in practice.

ablation_run() prunes one bundle under four configurations of increasing
machinery and reports reconstruction error and retained metric fraction:

    norm                    |W| * amplitude, no shuffle
    +entropy                entropy-aware metric, no shuffle
    +global_shuffle         entropy-aware metric, global stage only
    +local_shuffle          entropy-aware metric, full two-stage shuffle

The retained_fraction column is measured against one fixed yardstick for
every row: the entropy-aware metric of the full method. Fractions of
different metrics are not comparable (each normalizes by its own total),
whereas a shared measure makes the column monotone by construction: the
mask is the per-group argmax of that measure, and each shuffle stage can
only raise the retained total (guardrail + greedy guarantee).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .metrics import esparse_metric
from .pruner import PruneConfig, ShuffleConfig, prune_layer
from .shuffle import DEFAULT_BLOCK_SIZE, SparsityPattern
from .stats import compute_stats
from .tensorstore import LayerBundle, TensorF

STD_PROFILES = ("iid", "smooth_adjacent")

ABLATION_COLUMNS = ("config", "metric", "shuffle", "recon_error", "retained_fraction")


@dataclass(frozen=True)
class SynthSpec:
    seed: int
    tokens: int
    channels: int
    outlier_fraction: float = 0.05
    outlier_scale: float = 10.0
    std_profile: str = "smooth_adjacent"
    out_features: int | None = None
    weight_scale: float = 1.0

    def __post_init__(self):
        if self.tokens < 1:
            raise ValidationError(f"tokens must be >= 1, got {self.tokens}")
        if self.channels < 4:
            raise ValidationError(f"channels must be >= 4, got {self.channels}")
        if not 0.0 <= self.outlier_fraction <= 0.1:
            raise ValidationError(
                f"outlier_fraction must lie in [0, 0.1], got {self.outlier_fraction}"
            )
        if self.outlier_scale < 1.0:
            raise ValidationError(f"outlier_scale must be >= 1, got {self.outlier_scale}")
        if self.std_profile not in STD_PROFILES:
            raise ValidationError(f"std_profile must be one of {STD_PROFILES}")
        if self.out_features is not None and self.out_features < 1:
            raise ValidationError(f"out_features must be >= 1, got {self.out_features}")
        if self.weight_scale <= 0:
            raise ValidationError(f"weight_scale must be > 0, got {self.weight_scale}")


def _std_profile(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    lo, hi = 0.5, 2.0
    if spec.std_profile == "iid":
        return rng.uniform(lo, hi, size=spec.channels)
    knots = max(4, spec.channels // 32)
    anchor_pos = np.linspace(0, spec.channels - 1, knots)
    anchor_val = rng.uniform(lo, hi, size=knots)
    return np.interp(np.arange(spec.channels), anchor_pos, anchor_val)


def _outlier_channels(spec: SynthSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    if count == 0:
        return np.empty(0, dtype=np.int64)
    if spec.std_profile == "smooth_adjacent":
        start = int(rng.integers(0, spec.channels - count + 1))
        return np.arange(start, start + count, dtype=np.int64)
    return np.sort(rng.choice(spec.channels, size=count, replace=False)).astype(np.int64)


def generate(spec: SynthSpec) -> LayerBundle:
    """Deterministic bundle for the given spec: same spec, same bytes."""
    rng = np.random.default_rng(spec.seed)
    stds = _std_profile(spec, rng)
    x = rng.standard_normal((spec.tokens, spec.channels)) * stds[None, :]
    count = int(round(spec.outlier_fraction * spec.channels))
    outliers = _outlier_channels(spec, rng, count)
    # multiplicative injection until every outlier clears the scale threshold
    # against the median amplitude of the full (post-injection) channel set
    for _ in range(4):
        amps = np.sqrt(np.sum(x.astype(np.float64) ** 2, axis=0))
        if outliers.size == 0:
            break
        target = spec.outlier_scale * np.median(amps) * 1.02
        factors = np.maximum(1.0, target / amps[outliers])
        if np.all(factors <= 1.0):
            break
        x[:, outliers] *= factors[None, :]
    out_features = spec.out_features or spec.channels
    w = rng.standard_normal((out_features, spec.channels)) * spec.weight_scale
    return LayerBundle(
        layer_id=f"synth-{spec.seed}",
        weight=TensorF.from_array(w.astype(np.float32), dtype="f32"),
        calib_activations=TensorF.from_array(x.astype(np.float32), dtype="f32"),
    )


_ABLATION_CONFIGS = (
    ("norm", "wanda", "none"),
    ("+entropy", "esparse", "none"),
    ("+global_shuffle", "esparse", "global"),
    ("+local_shuffle", "esparse", "full"),
)


def ablation_run(bundle: LayerBundle, pat: SparsityPattern, alpha: float = 70.0,
                 bins: int = 100, block_size: int = DEFAULT_BLOCK_SIZE,
                 max_iters: int | None = None) -> list[dict]:
    """Prune one bundle under the four ablation configurations.

    retained_fraction is the share of the entropy-aware metric's total mass
    that survives each configuration's mask, so the column is comparable
    (and non-decreasing) down the rows.
    """
    stats = compute_stats(bundle.calib_activations, bins=bins)
    reference = esparse_metric(bundle.weight, stats, alpha=alpha)
    total = float(reference.scores.sum())
    rows = []
    for label, metric, shuffle_mode in _ABLATION_CONFIGS:
        config = PruneConfig(
            metric=metric,
            alpha=alpha,
            bins=bins,
            pattern=pat,
            shuffle=ShuffleConfig(mode=shuffle_mode, block_size=block_size, max_iters=max_iters),
        )
        result = prune_layer(bundle, config)
        kept = float(reference.scores[result.mask].sum())
        rows.append({
            "config": label,
            "metric": metric,
            "shuffle": shuffle_mode,
            "recon_error": result.recon_error,
            "retained_fraction": kept / total if total > 0 else 1.0,
        })
    return rows
