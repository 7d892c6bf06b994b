"""Weight importance metrics.

Every metric scores weight entry W[r, c] with a non-negative importance.
The entropy-aware score combines the channel's information content with its
amplitude:

    score[r, c] = |W[r, c]| * (entropy_c + alpha * amplitude_c)

`wanda` drops the entropy term (|W| * amplitude_c) and `magnitude` uses
|W| alone. Channel statistics are shared across all rows of the weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .stats import ChannelStats
from .tensorstore import TensorF

METRIC_KINDS = ("esparse", "wanda", "magnitude")

DEFAULT_ALPHA = 70.0


@dataclass(frozen=True, eq=False)
class MetricMatrix:
    """Importance scores aligned with a [C_out, C_in] weight matrix."""

    scores: np.ndarray
    metric_kind: str
    alpha: float | None = None

    def __post_init__(self):
        if self.metric_kind not in METRIC_KINDS:
            raise ValidationError(f"unknown metric kind {self.metric_kind!r}")
        if self.scores.ndim != 2:
            raise ValidationError(f"scores must be 2-D, got shape {self.scores.shape}")
        if not np.isfinite(self.scores).all():
            raise ValidationError("metric scores must be finite")
        if np.any(self.scores < 0):
            raise ValidationError("metric scores must be non-negative")


def _weight_f32(weight) -> np.ndarray:
    if isinstance(weight, TensorF):
        w = weight.to_f32()
    else:
        w = np.asarray(weight, dtype=np.float32)
    if w.ndim != 2:
        raise ValidationError(f"weight must be 2-D, got shape {w.shape}")
    return w


def esparse_metric(weight, stats: ChannelStats, alpha: float = DEFAULT_ALPHA) -> MetricMatrix:
    w = _weight_f32(weight)
    if alpha < 0:
        raise ValidationError(f"alpha must be >= 0, got {alpha}")
    if stats.channel_count != w.shape[1]:
        raise ValidationError(
            f"stats cover {stats.channel_count} channels but weight has {w.shape[1]} input channels"
        )
    channel_term = stats.entropy + alpha * stats.amplitude
    scores = np.abs(w).astype(np.float64) * channel_term[None, :]
    return MetricMatrix(scores=scores, metric_kind="esparse", alpha=float(alpha))


def wanda_metric(weight, stats: ChannelStats) -> MetricMatrix:
    w = _weight_f32(weight)
    if stats.channel_count != w.shape[1]:
        raise ValidationError(
            f"stats cover {stats.channel_count} channels but weight has {w.shape[1]} input channels"
        )
    scores = np.abs(w).astype(np.float64) * stats.amplitude[None, :]
    return MetricMatrix(scores=scores, metric_kind="wanda")


def magnitude_metric(weight) -> MetricMatrix:
    w = _weight_f32(weight)
    return MetricMatrix(scores=np.abs(w).astype(np.float64), metric_kind="magnitude")


def compute_metric(weight, metric_kind: str, stats: ChannelStats | None = None,
                   alpha: float = DEFAULT_ALPHA) -> MetricMatrix:
    if metric_kind == "magnitude":
        return magnitude_metric(weight)
    if stats is None:
        raise ValidationError(f"metric {metric_kind!r} requires channel statistics")
    if metric_kind == "esparse":
        return esparse_metric(weight, stats, alpha)
    if metric_kind == "wanda":
        return wanda_metric(weight, stats)
    raise ValidationError(f"unknown metric kind {metric_kind!r}")
