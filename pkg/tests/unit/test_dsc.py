import numpy as np
import pytest

from src.lib.error.handler import ShapeError
from src.lib.nn.gradcheck import grad_check
from src.lib.nn.layers import Dense
from src.lib.numerics import SeedTree
from src.models.system import ChannelDistribution, DecoderSpec, EncoderSpec, SoftEncoderSpec, SystemConfig
from src.services.channel import PilotMatrix, generate_batch, receive_pilots_batch
from src.services.dsc import (
    ChannelEstimatorModel,
    E2EModel,
    PilotLayer,
    build_model,
    build_test_set,
    evaluate,
)
from src.services.precoding import sum_rate_batch, zf_batch
from src.services.quantizer import ScalarQuantizer


def _random_channels(rng, n, k, m):
    return rng.standard_normal((n, k, m)) + 1j * rng.standard_normal((n, k, m))


def _noise(rng, n, k, l):
    return 0.3 * (rng.standard_normal((n, k, l)) + 1j * rng.standard_normal((n, k, l)))


@pytest.fixture
def gradcheck_model():
    system = SystemConfig(m=4, k_users=2, l_pilots=2, b_bits=3, snr_db=5.0)
    model = E2EModel(system, EncoderSpec(hidden=[5]), DecoderSpec(hidden=[6]), np.random.default_rng(0))
    model.set_smooth(True)
    model.set_alpha(1.0)
    return model


def test_pilot_layer_matches_complex_product():
    rng = np.random.default_rng(1)
    pilot = PilotMatrix.random(4, 3, 2.0, rng)
    layer = PilotLayer(pilot)
    h = _random_channels(rng, 5, 1, 4)[:, 0]
    noise = _noise(rng, 5, 1, 3)[:, 0]
    out = layer.forward(h, noise)
    expected = receive_pilots_batch(h, pilot, noise)
    np.testing.assert_allclose(out, np.concatenate([expected.real, expected.imag], axis=1), atol=1e-12)


def test_pilot_layer_gradient():
    rng = np.random.default_rng(2)
    layer = PilotLayer(PilotMatrix.random(4, 3, 1.0, rng))
    h = _random_channels(rng, 5, 1, 4)[:, 0]
    noise = _noise(rng, 5, 1, 3)[:, 0]
    weights = rng.standard_normal((5, 6))
    layer.forward(h, noise)
    layer.backward(weights)

    def loss():
        return float(np.sum(layer.forward(h, noise) * weights))

    report = grad_check(
        loss, {"re": layer.re.value, "im": layer.im.value}, {"re": layer.re.grad.copy(), "im": layer.im.grad.copy()}
    )
    assert report.passed(1e-6), report


def test_pilot_layer_projection_and_shapes():
    rng = np.random.default_rng(3)
    layer = PilotLayer(PilotMatrix.random(4, 2, 3.0, rng))
    layer.re.value *= 2.0
    layer.project()
    np.testing.assert_allclose(layer.pilot().column_power(), 3.0)
    with pytest.raises(ShapeError):
        layer.forward(np.ones((2, 5)), np.zeros((2, 2)))


def test_end_to_end_gradient(gradcheck_model):
    rng = np.random.default_rng(4)
    for _ in range(5):
        h = _random_channels(rng, 4, 2, 4)
        noise = _noise(rng, 4, 2, 2)
        gradcheck_model.zero_grad()
        gradcheck_model.loss_and_backward(h, noise)
        params = gradcheck_model.named_parameters()
        report = grad_check(
            lambda: gradcheck_model.loss(h, noise),
            {name: p.value for name, p in params.items()},
            {name: p.grad.copy() for name, p in params.items()},
            max_entries=8,
            rng=rng,
        )
        assert report.passed(1e-4), report


def test_forward_shapes_and_power(small_system, tiny_encoder, tiny_decoder, seeds):
    model = build_model(small_system, tiny_encoder, tiny_decoder, seeds)
    rng = np.random.default_rng(5)
    out = model.forward(_random_channels(rng, 6, 2, 8), _noise(rng, 6, 2, 4))
    assert out.v.shape == (6, 8, 2)
    assert out.messages.shape == (6, 2, small_system.b_bits)
    assert set(np.unique(out.messages)) <= {-1.0, 1.0}
    power = np.sum(np.abs(out.v) ** 2, axis=(1, 2))
    np.testing.assert_allclose(power, small_system.total_power, rtol=1e-12)
    assert model.feedback_bits == small_system.b_bits


def test_constant_decoder_output_matches_direct_rate():
    system = SystemConfig(m=4, k_users=2, l_pilots=2, b_bits=3)
    model = E2EModel(system, EncoderSpec(hidden=[4]), DecoderSpec(hidden=[4]), np.random.default_rng(6))
    last = model.decoder.find(Dense)[-1]
    last.w.value[...] = 0.0
    last.b.value[...] = np.arange(1.0, 17.0)
    rng = np.random.default_rng(7)
    h = _random_channels(rng, 5, 2, 4)
    loss = model.loss(h, _noise(rng, 5, 2, 2))

    direction = np.arange(1.0, 17.0) / np.linalg.norm(np.arange(1.0, 17.0)) * np.sqrt(system.total_power)
    v = (direction[:8] + 1j * direction[8:]).reshape(4, 2)
    expected = -np.mean(sum_rate_batch(h, np.broadcast_to(v, (5, 4, 2)), system.sigma2))
    assert np.isfinite(loss)
    assert loss == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("shared", [False, True])
def test_feedback_bits_ignore_other_users(shared):
    system = SystemConfig(m=8, k_users=3, l_pilots=4, b_bits=6)
    model = E2EModel(
        system, EncoderSpec(hidden=[8]), DecoderSpec(hidden=[8]), np.random.default_rng(8), shared_encoder=shared
    )
    model.eval()
    rng = np.random.default_rng(9)
    h = _random_channels(rng, 1000, 3, 8)
    noise = _noise(rng, 1000, 3, 4)
    before = model.encode(h, noise)
    perturbed = h.copy()
    perturbed[:, 1:] = _random_channels(rng, 1000, 2, 8)
    after = model.encode(perturbed, noise)
    assert before[:, 0].tobytes() == after[:, 0].tobytes()


def test_frozen_user_side_gets_no_gradient(small_system, tiny_encoder, tiny_decoder, seeds):
    model = build_model(small_system, tiny_encoder, tiny_decoder, seeds)
    pilot_before = model.pilot.re.value.copy()
    model.freeze_user_side()
    model.train()
    assert not model.pilot.training and model.decoder.training
    rng = np.random.default_rng(10)
    model.zero_grad()
    model.loss_and_backward(_random_channels(rng, 4, 2, 8), _noise(rng, 4, 2, 4))
    assert np.all(model.pilot.re.grad == 0.0)
    assert all(name.startswith("decoder.") for name, p in model.named_parameters().items() if p.trainable)
    model.project_pilots()
    np.testing.assert_array_equal(model.pilot.re.value, pilot_before)


def test_soft_model_with_quantizer(small_system, tiny_decoder, seeds):
    soft = SoftEncoderSpec(s=3, q_bits=1)
    model = build_model(small_system, EncoderSpec(hidden=[8], output="tanh"), tiny_decoder, seeds, soft=soft)
    assert model.message_width == 3 and not model.uses_annealing
    assert model.feedback_bits is None
    model.attach_quantizers(ScalarQuantizer.from_levels([-0.5, 0.5]))
    assert model.feedback_bits == 3
    rng = np.random.default_rng(11)
    model.zero_grad()
    model.loss_and_backward(_random_channels(rng, 4, 2, 8), _noise(rng, 4, 2, 4))
    assert np.all(model.pilot.im.grad == 0.0)
    assert any(np.any(p.grad != 0.0) for p in model.decoder.parameters())


def test_tanh_encoder_needs_soft_spec(small_system, tiny_decoder):
    with pytest.raises(ValueError):
        E2EModel(small_system, EncoderSpec(hidden=[4], output="tanh"), tiny_decoder, np.random.default_rng(0))


def test_precode_is_chunked_inference(small_system, tiny_encoder, tiny_decoder, seeds, distribution):
    model = build_model(small_system, tiny_encoder, tiny_decoder, seeds)
    channels = generate_batch(distribution, small_system.array, 2, 1500, np.random.default_rng(12))
    noise = _noise(np.random.default_rng(13), 1500, 2, 4)
    v = model.precode(channels, noise)
    assert model.training
    model.eval()
    np.testing.assert_allclose(v[1100:1110], model.forward(channels.h[1100:1110], noise[1100:1110]).v, atol=1e-12)
    with pytest.raises(ShapeError):
        model.precode(channels, None)
    with pytest.raises(ShapeError):
        model.precode(channels, noise[:, :, :3])


def test_channel_estimator_shapes_and_gradient():
    system = SystemConfig(m=4, k_users=1, l_pilots=3, b_bits=4)
    model = ChannelEstimatorModel(system, EncoderSpec(hidden=[5]), DecoderSpec(hidden=[5]), np.random.default_rng(14))
    rng = np.random.default_rng(15)
    h = _random_channels(rng, 6, 1, 4)
    noise = _noise(rng, 6, 1, 3)
    estimates, bits = model.forward(h, noise)
    assert estimates.shape == (6, 1, 4) and bits.shape == (6, 1, 4)

    for layer in model.modules():
        if hasattr(layer, "smooth"):
            layer.smooth = True
    model.zero_grad()
    mse = model.loss_and_backward(h, noise)

    def loss():
        estimate, _ = model.forward(h, noise)
        return float(np.mean(np.sum(np.abs(estimate - h) ** 2, axis=-1)))

    assert mse == pytest.approx(loss(), rel=1e-12)
    params = model.named_parameters()
    report = grad_check(
        loss,
        {name: p.value for name, p in params.items()},
        {name: p.grad.copy() for name, p in params.items()},
        max_entries=8,
        rng=rng,
    )
    assert report.passed(1e-4), report
    assert model.estimate(h, noise).shape == (6, 1, 4)


class _ZeroForcing:
    l_pilots = None

    def __init__(self, power):
        self.power = power

    def precode(self, channels, noise):
        return zf_batch(channels.h, self.power)


def test_evaluate_matches_direct_rates(small_system):
    test_set = build_test_set(ChannelDistribution(lp=2), small_system, 200, SeedTree(3))
    result = evaluate(_ZeroForcing(small_system.total_power), test_set)
    sums = sum_rate_batch(test_set.channels.h, zf_batch(test_set.channels.h, small_system.total_power), 1.0)
    assert result.sum_rate == pytest.approx(float(np.mean(sums)), abs=1e-12)
    assert result.sum_rate_stderr == pytest.approx(float(np.std(sums, ddof=1) / np.sqrt(200)), abs=1e-12)
    assert len(result.per_user_rates) == 2 and result.test_size == 200


def test_test_set_noise_is_fixed_per_pilot_length(small_system):
    test_set = build_test_set(ChannelDistribution(lp=2), small_system, 10, SeedTree(4))
    np.testing.assert_array_equal(test_set.noise(4), test_set.noise(4))
    assert test_set.noise(8).shape == (10, 2, 8)
    with pytest.raises(ValueError):
        test_set.noise(0)
