import numpy as np
import pytest

from nmprune.errors import ValidationError
from nmprune.metrics import (
    MetricMatrix,
    compute_metric,
    esparse_metric,
    magnitude_metric,
    wanda_metric,
)
from nmprune.stats import ChannelStats, compute_stats


def make_stats(entropy, amplitude, bins=100):
    entropy = np.asarray(entropy, dtype=np.float64)
    amplitude = np.asarray(amplitude, dtype=np.float64)
    c = entropy.size
    return ChannelStats(
        channel_count=c,
        bins=bins,
        entropy=entropy,
        amplitude=amplitude,
        minimum=np.zeros(c),
        maximum=np.ones(c),
    )


def test_esparse_single_entry_arithmetic():
    stats = make_stats([0.3], [10.0])
    m = esparse_metric(np.array([[3.0]], dtype=np.float32), stats, alpha=70.0)
    assert m.scores[0, 0] == abs(3.0) * (0.3 + 70.0 * 10.0)
    assert m.metric_kind == "esparse"
    assert m.alpha == 70.0


def test_esparse_zero_weight_gives_zero_scores():
    stats = make_stats([1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0])
    m = esparse_metric(np.zeros((3, 4), dtype=np.float32), stats)
    assert np.all(m.scores == 0.0)


def test_esparse_matches_scalar_oracle():
    rng = np.random.default_rng(21)
    w = rng.standard_normal((8, 16)).astype(np.float32)
    x = rng.standard_normal((256, 16)).astype(np.float32)
    stats = compute_stats(x, bins=100)
    m = esparse_metric(w, stats, alpha=70.0)
    for r in range(8):
        for c in range(16):
            want = abs(float(w[r, c])) * (float(stats.entropy[c]) + 70.0 * float(stats.amplitude[c]))
            got = m.scores[r, c]
            assert abs(got - want) <= 1e-6 * max(abs(want), 1e-30)


def test_wanda_single_entry_arithmetic():
    stats = make_stats([0.9], [5.0])
    m = wanda_metric(np.array([[-2.0]], dtype=np.float32), stats)
    assert m.scores[0, 0] == 10.0
    assert m.metric_kind == "wanda"


def test_magnitude_is_absolute_value():
    m = magnitude_metric(np.array([[-2.0, 1.0], [0.5, -0.25]], dtype=np.float32))
    assert m.scores.tolist() == [[2.0, 1.0], [0.5, 0.25]]
    assert m.metric_kind == "magnitude"


def test_scores_monotone_in_weight_magnitude():
    stats = make_stats([0.5, 0.5], [2.0, 2.0])
    m = esparse_metric(np.array([[3.0, -1.0]], dtype=np.float32), stats)
    assert m.scores[0, 0] > m.scores[0, 1]


def test_alpha_zero_reduces_to_entropy_weighting():
    stats = make_stats([0.25, 4.0], [100.0, 1.0])
    w = np.array([[1.0, 1.0]], dtype=np.float32)
    m = esparse_metric(w, stats, alpha=0.0)
    assert m.scores[0, 0] == 0.25
    assert m.scores[0, 1] == 4.0


def test_constant_entropy_alpha_zero_ranks_like_magnitude():
    rng = np.random.default_rng(3)
    w = rng.standard_normal((4, 8)).astype(np.float32)
    stats = make_stats(np.full(8, 1.5), np.zeros(8))
    m = esparse_metric(w, stats, alpha=0.0)
    assert np.array_equal(np.argsort(m.scores, axis=1), np.argsort(np.abs(w), axis=1))


def test_metric_validation():
    stats = make_stats([0.5], [1.0])
    with pytest.raises(ValidationError):
        esparse_metric(np.array([[1.0]], dtype=np.float32), stats, alpha=-1.0)
    with pytest.raises(ValidationError):
        esparse_metric(np.zeros((2, 3), dtype=np.float32), stats)
    with pytest.raises(ValidationError):
        compute_metric(np.zeros((2, 2), dtype=np.float32), "esparse", stats=None)
    with pytest.raises(ValidationError):
        compute_metric(np.zeros((2, 2), dtype=np.float32), "nope")
    with pytest.raises(ValidationError):
        MetricMatrix(scores=np.array([[-1.0]]), metric_kind="magnitude")


def test_compute_metric_dispatch():
    rng = np.random.default_rng(11)
    w = rng.standard_normal((4, 4)).astype(np.float32)
    x = rng.standard_normal((64, 4)).astype(np.float32)
    stats = compute_stats(x, bins=16)
    assert compute_metric(w, "magnitude").metric_kind == "magnitude"
    assert compute_metric(w, "wanda", stats=stats).metric_kind == "wanda"
    assert compute_metric(w, "esparse", stats=stats, alpha=5.0).alpha == 5.0
