"""Per-channel calibration statistics.

For activations X of shape [T, C] (T tokens, C channels) two quantities are
computed per channel c:

  entropy   H_c = -sum_k p_k log(p_k), natural log, where p is the channel's
            histogram over K equal-width bins spanning [min_c, max_c]
  amplitude A_c = sqrt(sum_t X[t, c]^2), the channel's L2 norm over tokens

A constant channel has zero-width range; all mass lands in bin 0 and the
entropy is 0. Values equal to the channel maximum fall in the last bin.
Entropy is bounded by log(K); amplitude is 0 exactly when the channel is
identically zero. Sums of squares accumulate in f64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .tensorstore import TensorF


@dataclass(frozen=True, eq=False)
class ChannelStats:
    channel_count: int
    bins: int
    entropy: np.ndarray
    amplitude: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        c = self.channel_count
        for name in ("entropy", "amplitude", "minimum", "maximum"):
            arr = getattr(self, name)
            if arr.shape != (c,):
                raise ValidationError(f"{name} must have shape ({c},), got {arr.shape}")
        if self.bins < 2:
            raise ValidationError(f"bins must be >= 2, got {self.bins}")
        cap = np.log(self.bins) + 1e-9
        if np.any(self.entropy < 0) or np.any(self.entropy > cap):
            raise ValidationError("channel entropy out of [0, log(bins)] range")
        if np.any(self.amplitude < 0):
            raise ValidationError("channel amplitude must be non-negative")


def channel_histogram(values: np.ndarray, bins: int = 100) -> np.ndarray:
    """Probability mass over `bins` equal-width bins spanning [min, max].

    Bin assignment is k = clip(floor((v - min) / (max - min) * bins), 0, bins-1),
    so the channel maximum lands in the last bin. A constant channel puts all
    mass in bin 0.
    """
    if bins < 2:
        raise ValidationError(f"bins must be >= 2, got {bins}")
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValidationError("cannot histogram an empty channel")
    if not np.isfinite(v).all():
        raise ValidationError("channel contains non-finite values")
    lo = v.min()
    hi = v.max()
    counts = np.zeros(bins, dtype=np.int64)
    if hi == lo:
        counts[0] = v.size
    else:
        idx = np.floor((v - lo) / (hi - lo) * bins).astype(np.int64)
        np.clip(idx, 0, bins - 1, out=idx)
        np.add.at(counts, idx, 1)
    return counts / np.float64(v.size)


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats of a probability vector."""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if np.any(p < 0):
        raise ValidationError("probabilities must be non-negative")
    total = float(p.sum())
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"probabilities must sum to 1, got {total}")
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def amplitude(values: np.ndarray) -> float:
    """L2 norm of one channel across tokens, accumulated in f64."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.isfinite(v).all():
        raise ValidationError("channel contains non-finite values")
    return float(np.sqrt(np.sum(v * v)))


def compute_stats(activations, bins: int = 100) -> ChannelStats:
    """Per-channel entropy, amplitude and range for activations of shape [T, C]."""
    if isinstance(activations, TensorF):
        x = activations.to_f32()
    else:
        x = np.asarray(activations, dtype=np.float32)
    if x.ndim != 2:
        raise ValidationError(f"activations must be 2-D [tokens, channels], got shape {x.shape}")
    tokens, channels = x.shape
    if tokens < 1 or channels < 1:
        raise ValidationError("activations must contain at least one token and one channel")
    if bins < 2:
        raise ValidationError(f"bins must be >= 2, got {bins}")
    if not np.isfinite(x).all():
        raise ValidationError("activations contain non-finite values")
    ent = np.empty(channels, dtype=np.float64)
    amp = np.empty(channels, dtype=np.float64)
    for c in range(channels):
        col = x[:, c]
        ent[c] = entropy(channel_histogram(col, bins))
        amp[c] = amplitude(col)
    return ChannelStats(
        channel_count=channels,
        bins=bins,
        entropy=ent,
        amplitude=amp,
        minimum=x.min(axis=0).astype(np.float64),
        maximum=x.max(axis=0).astype(np.float64),
    )
