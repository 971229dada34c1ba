import json
import os

import numpy as np
import pytest

from src.lib.error.handler import CheckpointError, DegenerateInputError
from src.lib.numerics import SeedTree
from src.models.system import DecoderSpec, EncoderSpec, SoftEncoderSpec, SystemConfig
from src.services.dsc import build_model
from src.services.generalize import (
    decoder_for_users,
    fit_output_quantizer,
    load_bundle,
    load_quantizers,
    retrain_bs_decoder,
    sample_soft_outputs,
    save_bundle,
    save_quantizers,
    train_bs_for_k,
    train_shared_encoder_single_user,
    train_soft_encoder,
    with_users,
)
from src.services.quantizer import ScalarQuantizer, distortion, uniform_quantizer

SOFT = SoftEncoderSpec(s=3, q_bits=2)


@pytest.fixture
def soft_model(small_system, tiny_decoder, seeds):
    return build_model(small_system, EncoderSpec(hidden=[8], output="tanh"), tiny_decoder, seeds, soft=SOFT)


@pytest.fixture
def shared_model(small_system, tiny_encoder, tiny_decoder, seeds):
    return build_model(with_users(small_system, 1), tiny_encoder, tiny_decoder, seeds, shared_encoder=True)


def test_pooled_quantizer_beats_uniform_on_tanh_outputs():
    outputs = np.tanh(1.5 * np.random.default_rng(0).standard_normal((40_000, 3)))
    quantizer = fit_output_quantizer(outputs, 3)
    assert isinstance(quantizer, ScalarQuantizer)
    assert distortion(quantizer, outputs.ravel()) <= distortion(uniform_quantizer(-1.0, 1.0, 3), outputs.ravel())


def test_per_neuron_quantizers():
    outputs = np.random.default_rng(1).uniform(-1, 1, (40_000, 3)) * np.array([0.2, 0.5, 1.0])
    quantizers = fit_output_quantizer(outputs, 1, per_neuron=True)
    assert len(quantizers) == 3
    assert quantizers[0].levels[1] < quantizers[2].levels[1]


def test_quantizer_needs_enough_samples():
    with pytest.raises(DegenerateInputError):
        fit_output_quantizer(np.zeros((10, 3)), 2)


def test_quantizer_file_roundtrip(tmp_path):
    pooled = ScalarQuantizer.from_levels([-0.5, 0.5])
    listed = [ScalarQuantizer.from_levels([-0.1, 0.2]), ScalarQuantizer.from_levels([0.0, 0.3])]
    save_quantizers(str(tmp_path / "pooled.json"), pooled)
    save_quantizers(str(tmp_path / "listed.json"), listed)
    assert load_quantizers(str(tmp_path / "pooled.json")) == pooled
    assert load_quantizers(str(tmp_path / "listed.json")) == listed


def test_sample_soft_outputs_meets_minimum(soft_model, distribution, seeds):
    outputs = sample_soft_outputs(soft_model, distribution, seeds, 1000)
    assert outputs.size >= 1000 and outputs.shape[1:] == (2, 3)
    assert np.all(np.abs(outputs) <= 1.0)


def test_bundle_roundtrip_freezes_user_side(soft_model, small_system, tiny_decoder, tmp_path):
    quantizer = ScalarQuantizer.from_levels([-0.5, 0.5])
    directory = str(tmp_path / "bundle")
    manifest = save_bundle(directory, soft_model, quantizer)
    assert manifest.quantizers == "quantizers.json"

    fresh = build_model(
        small_system, EncoderSpec(hidden=[8], output="tanh"), tiny_decoder, SeedTree(99), soft=SOFT
    )
    loaded_manifest, loaded_quantizer = load_bundle(directory, fresh)
    assert loaded_manifest.checkpoint_sha256 == manifest.checkpoint_sha256
    assert loaded_quantizer == quantizer
    assert fresh.user_side_frozen
    np.testing.assert_array_equal(fresh.pilot.re.value, soft_model.pilot.re.value)
    for source, target in zip(soft_model.encoders, fresh.encoders):
        for name, value in source.state_dict().items():
            np.testing.assert_array_equal(target.state_dict()[name], value)


def test_bundle_rejects_tampering(soft_model, tmp_path):
    directory = str(tmp_path / "bundle")
    save_bundle(directory, soft_model)
    with open(os.path.join(directory, "user_side.bin"), "r+b") as f:
        f.write(b"\x00\x01")
    with pytest.raises(CheckpointError):
        load_bundle(directory, soft_model)
    with pytest.raises(CheckpointError):
        load_bundle(str(tmp_path / "missing"), soft_model)


def test_bundle_manifest_omits_decoder(soft_model, tmp_path):
    directory = str(tmp_path / "bundle")
    save_bundle(directory, soft_model)
    with open(os.path.join(directory, "user_side.json")) as f:
        names = [entry["name"] for entry in json.load(f)["tensors"]]
    assert names and not any(name.startswith("decoder.") for name in names)


def test_soft_training_then_quantized_decoder(small_system, tiny_decoder, tiny_schedule, distribution, seeds):
    soft_result = train_soft_encoder(
        small_system, EncoderSpec(hidden=[8]), tiny_decoder, SOFT, tiny_schedule, distribution, seeds
    )
    soft_model = soft_result.model
    assert soft_model.mode == "tanh"
    assert all(record.alpha is None for record in soft_result.history)

    outputs = sample_soft_outputs(soft_model, distribution, seeds, 600)
    quantizer = fit_output_quantizer(outputs, 2, min_samples=600)
    result = retrain_bs_decoder(soft_model, quantizer, DecoderSpec(hidden=[12]), tiny_schedule, distribution, seeds)
    retrained = result.model
    assert retrained.feedback_bits == SOFT.s * 2
    assert retrained.user_side_frozen
    np.testing.assert_array_equal(retrained.pilot.re.value, soft_model.pilot.re.value)
    np.testing.assert_array_equal(
        retrained.encoders[1].state_dict()["0.batchnorm.gamma"], soft_model.encoders[1].state_dict()["0.batchnorm.gamma"]
    )


def test_unquantized_retraining_keeps_soft_outputs(soft_model, tiny_decoder, tiny_schedule, distribution, seeds):
    result = retrain_bs_decoder(soft_model, None, tiny_decoder, tiny_schedule, distribution, seeds)
    assert result.model.quantizers is None
    assert result.model.feedback_bits is None


def test_shared_encoder_serves_more_users(small_system, tiny_encoder, tiny_decoder, tiny_schedule, distribution, seeds):
    single = train_shared_encoder_single_user(
        small_system, tiny_encoder, tiny_decoder, tiny_schedule, distribution, seeds
    ).model
    assert single.k_users == 1 and single.shared_encoder

    result = train_bs_for_k(single, 3, DecoderSpec(hidden=[10]), tiny_schedule, distribution, seeds)
    model = result.model
    assert model.k_users == 3 and len(model.encoders) == 1
    assert model.decoder.layers[0].features == 3 * small_system.b_bits
    np.testing.assert_array_equal(model.pilot.im.value, single.pilot.im.value)


def test_train_bs_for_k_needs_shared_encoder(soft_model, tiny_decoder, tiny_schedule, distribution, seeds):
    with pytest.raises(ValueError):
        train_bs_for_k(soft_model, 2, tiny_decoder, tiny_schedule, distribution, seeds)


def test_with_users_and_decoder_choice(small_system):
    assert with_users(small_system, 3).k_users == 3
    with pytest.raises(ValueError):
        with_users(small_system, 8)
    base, large = DecoderSpec(hidden=[4]), DecoderSpec(hidden=[8])
    assert decoder_for_users(2, base, large) is base
    assert decoder_for_users(3, base, large) is large
