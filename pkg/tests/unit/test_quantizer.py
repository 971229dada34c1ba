import numpy as np
import pytest

from src.lib.error.handler import AllocationError, DegenerateInputError, QuantizerError
from src.models.system import ArrayConfig, ChannelDistribution
from src.services.channel import generate_batch
from src.services.quantizer import (
    ChannelParamCodec,
    ParamBitAllocation,
    ScalarQuantizer,
    canonical_paths,
    channel_params,
    dequantize,
    distortion,
    lloyd_max_fit,
    lloyd_max_iterate,
    quantize,
    quantize_channel_params,
    reconstruct_channel,
    uniform_quantizer,
)


def test_one_bit_gaussian_levels():
    samples = np.random.default_rng(0).standard_normal(1_000_000)
    q = lloyd_max_fit(samples, 1)
    np.testing.assert_allclose(q.levels, [-np.sqrt(2 / np.pi), np.sqrt(2 / np.pi)], atol=1e-2)


def test_one_bit_uniform_levels():
    samples = np.random.default_rng(1).uniform(0.0, 1.0, 1_000_000)
    q = lloyd_max_fit(samples, 1)
    np.testing.assert_allclose(q.levels, [0.25, 0.75], atol=1e-2)


def test_distortion_history_is_non_increasing():
    samples = np.random.default_rng(2).standard_normal(50_000)
    _, history = lloyd_max_iterate(samples, 3)
    assert all(later <= earlier + 1e-12 for earlier, later in zip(history, history[1:]))


def test_lloyd_max_beats_uniform_on_gaussian():
    samples = np.random.default_rng(3).standard_normal(100_000)
    assert distortion(lloyd_max_fit(samples, 3), samples) <= distortion(uniform_quantizer(-3, 3, 3), samples)


def test_lloyd_max_needs_enough_distinct_samples():
    with pytest.raises(DegenerateInputError):
        lloyd_max_fit(np.array([1.0, 1.0, 2.0]), 2)


def test_quantize_boundary_goes_to_lower_index():
    q = ScalarQuantizer.from_levels([-1.0, 1.0])
    assert quantize(q, 0.0) == 0
    assert quantize(q, 1e-9) == 1
    np.testing.assert_array_equal(quantize(q, np.array([-5.0, 5.0])), [0, 1])


def test_dequantize_rejects_out_of_range():
    q = ScalarQuantizer.from_levels([-1.0, 1.0])
    assert dequantize(q, 1) == 1.0
    with pytest.raises(QuantizerError):
        dequantize(q, 2)
    with pytest.raises(QuantizerError):
        dequantize(q, np.array([0.5]))


def test_scalar_quantizer_validates_codebook():
    with pytest.raises(ValueError):
        ScalarQuantizer(levels=[0.0, 1.0, 2.0], boundaries=[0.5, 1.5])
    with pytest.raises(ValueError):
        ScalarQuantizer(levels=[1.0, 0.0], boundaries=[0.5])


def test_scalar_quantizer_save_load(tmp_path):
    q = lloyd_max_fit(np.random.default_rng(4).standard_normal(1000), 2)
    path = str(tmp_path / "q.json")
    q.save(path)
    assert ScalarQuantizer.load(path) == q


def test_allocation_split():
    alloc = ParamBitAllocation.allocate(30, 2)
    assert alloc.bits_per_param == [5] * 6
    uneven = ParamBitAllocation.allocate(8, 2)
    # angles first, then real gains
    assert uneven.bits_per_param == [1, 1, 2, 1, 1, 2]
    assert uneven.total == 8 and uneven.lp == 2


def test_allocation_rejects_tiny_budget():
    with pytest.raises(AllocationError):
        ParamBitAllocation.allocate(5, 2)


def test_canonical_paths_keeps_strongest_in_angle_order():
    gains = np.array([0.1, 3.0, 2.0])
    aods = np.array([0.0, 0.5, -0.2])
    kept_gains, kept_aods = canonical_paths(gains, aods, 2)
    np.testing.assert_allclose(kept_aods, [-0.2, 0.5])
    np.testing.assert_allclose(kept_gains, [2.0, 3.0])
    assert channel_params(gains, aods, 2).shape == (6,)


@pytest.fixture(scope="module")
def codec():
    dist = ChannelDistribution(lp=2)
    bits = [1, 2, 3, 4, 5]
    return ChannelParamCodec.fit(dist, 2, bits, np.random.default_rng(5), n_samples=20_000)


def test_channel_distortion_decreases_with_bits(codec):
    cfg = ArrayConfig(m=16)
    batch = generate_batch(ChannelDistribution(lp=2), cfg, 1, 500, np.random.default_rng(6))
    errors = []
    for b_bits in (6, 12, 18, 24, 30):
        alloc = ParamBitAllocation.allocate(b_bits, 2)
        total = 0.0
        for draw in range(batch.n):
            params = channel_params(batch.gains[draw, 0], batch.aods[draw, 0], 2)
            bits = quantize_channel_params(params, alloc, codec)
            assert bits.size == b_bits
            h_hat = reconstruct_channel(bits, alloc, codec, cfg).to_complex().ravel()
            total += np.sum(np.abs(h_hat - batch.h[draw, 0]) ** 2)
        errors.append(total / batch.n)
    assert all(later < earlier for earlier, later in zip(errors, errors[1:]))


def test_codec_rejects_missing_resolution(codec):
    alloc = ParamBitAllocation.allocate(60, 2)
    with pytest.raises(QuantizerError):
        codec.encode(np.zeros(6), alloc)


def test_codec_save_load(codec, tmp_path):
    path = str(tmp_path / "codec.json")
    codec.save(path)
    loaded = ChannelParamCodec.load(path)
    alloc = ParamBitAllocation.allocate(18, 2)
    params = np.array([0.3, -0.2, -0.1, 1.1, 0.4, 0.3])
    np.testing.assert_array_equal(loaded.encode(params, alloc), codec.encode(params, alloc))
    np.testing.assert_allclose(loaded.decode(codec.encode(params, alloc), alloc), codec.decode(codec.encode(params, alloc), alloc))
