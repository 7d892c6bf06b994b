import numpy as np
import pytest

from nmprune.errors import ValidationError
from nmprune.shuffle import SparsityPattern
from nmprune.synth import ABLATION_COLUMNS, SynthSpec, ablation_run, generate

PAT24 = SparsityPattern(2, 4)


def amplitudes(bundle):
    x = bundle.calib_activations.data.astype(np.float64)
    return np.sqrt((x * x).sum(axis=0))


def test_generate_is_deterministic():
    spec = SynthSpec(seed=7, tokens=64, channels=32)
    a, b = generate(spec), generate(spec)
    assert a.layer_id == b.layer_id == "synth-7"
    assert a.weight.data.tobytes() == b.weight.data.tobytes()
    assert a.calib_activations.data.tobytes() == b.calib_activations.data.tobytes()


def test_generate_shapes_and_defaults():
    bundle = generate(SynthSpec(seed=1, tokens=48, channels=16))
    assert bundle.weight.shape == (16, 16)
    assert bundle.calib_activations.shape == (48, 16)
    custom = generate(SynthSpec(seed=1, tokens=48, channels=16, out_features=5))
    assert custom.weight.shape == (5, 16)


def test_no_outliers_when_fraction_zero():
    bundle = generate(SynthSpec(seed=3, tokens=256, channels=64, outlier_fraction=0.0))
    amps = amplitudes(bundle)
    # std profile spans [0.5, 2]: no channel can reach a 10x median amplitude
    assert amps.max() < 10.0 * np.median(amps)


def test_outliers_reach_scale_threshold():
    spec = SynthSpec(seed=4, tokens=512, channels=100,
                     outlier_fraction=0.05, outlier_scale=10.0)
    amps = amplitudes(generate(spec))
    median = np.median(amps)
    assert (amps >= 10.0 * median).sum() == 5


def test_smooth_profile_outliers_are_contiguous():
    for seed in range(10):
        spec = SynthSpec(seed=seed, tokens=256, channels=80,
                         outlier_fraction=0.05, outlier_scale=10.0,
                         std_profile="smooth_adjacent")
        amps = amplitudes(generate(spec))
        hot = np.flatnonzero(amps >= 10.0 * np.median(amps))
        assert hot.size == 4
        assert np.all(np.diff(hot) == 1)


def test_smooth_profile_has_smaller_adjacent_std_gaps():
    gaps = {"iid": [], "smooth_adjacent": []}
    for profile in gaps:
        for seed in range(20):
            spec = SynthSpec(seed=seed, tokens=2048, channels=128,
                             outlier_fraction=0.0, std_profile=profile)
            stds = generate(spec).calib_activations.data.astype(np.float64).std(axis=0)
            gaps[profile].append(np.abs(np.diff(stds)).mean())
    assert np.mean(gaps["smooth_adjacent"]) < 0.5 * np.mean(gaps["iid"])


def test_spec_validation():
    with pytest.raises(ValidationError):
        SynthSpec(seed=0, tokens=0, channels=16)
    with pytest.raises(ValidationError):
        SynthSpec(seed=0, tokens=8, channels=3)
    with pytest.raises(ValidationError):
        SynthSpec(seed=0, tokens=8, channels=16, outlier_fraction=0.2)
    with pytest.raises(ValidationError):
        SynthSpec(seed=0, tokens=8, channels=16, outlier_scale=0.5)
    with pytest.raises(ValidationError):
        SynthSpec(seed=0, tokens=8, channels=16, std_profile="spiky")
    with pytest.raises(ValidationError):
        SynthSpec(seed=0, tokens=8, channels=16, weight_scale=0.0)
    with pytest.raises(ValidationError):
        SynthSpec(seed=0, tokens=8, channels=16, out_features=0)


def test_ablation_rows_and_monotone_retained_fraction():
    bundle = generate(SynthSpec(seed=0, tokens=512, channels=128))
    rows = ablation_run(bundle, PAT24, block_size=64)
    assert len(rows) == 4
    assert [r["config"] for r in rows] == [
        "norm", "+entropy", "+global_shuffle", "+local_shuffle"]
    assert [r["metric"] for r in rows] == ["wanda", "esparse", "esparse", "esparse"]
    assert [r["shuffle"] for r in rows] == ["none", "none", "global", "full"]
    for row in rows:
        assert set(row) == set(ABLATION_COLUMNS)
        assert row["recon_error"] >= 0.0
        assert 0.0 < row["retained_fraction"] <= 1.0
    fractions = [r["retained_fraction"] for r in rows]
    assert all(b >= a - 1e-12 for a, b in zip(fractions, fractions[1:]))


def test_ablation_full_method_beats_plain_norm_on_outlier_fixture():
    bundle = generate(SynthSpec(seed=0, tokens=1024, channels=128,
                                outlier_fraction=0.05, outlier_scale=10.0))
    rows = ablation_run(bundle, PAT24, block_size=64)
    by = {r["config"]: r for r in rows}
    assert by["+local_shuffle"]["recon_error"] <= by["norm"]["recon_error"]
    assert (by["+local_shuffle"]["retained_fraction"]
            >= by["norm"]["retained_fraction"])


def test_ablation_is_deterministic():
    bundle = generate(SynthSpec(seed=2, tokens=256, channels=64))
    a = ablation_run(bundle, PAT24, block_size=32)
    b = ablation_run(bundle, PAT24, block_size=32)
    assert a == b
