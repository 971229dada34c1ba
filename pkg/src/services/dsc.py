"""
End-to-end distributed precoding system: trainable downlink pilots, per-user feedback encoders
and the BS-side decoder that maps the collected feedback to a precoding matrix.

Also holds the channel-reconstruction network used as the MSE-trained baseline, the training
objectives fed to ``Trainer`` and the evaluation entry point shared with the baselines.
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel

from src.lib.error.handler import ShapeError
from src.lib.nn.layers import Module, Parameter, Sequential, SignST, Tanh, UnitNormScale, mlp
from src.lib.numerics import CMatrix, SeedTree, complex_gaussian
from src.models.system import (
    ChannelDistribution,
    DecoderSpec,
    EncoderSpec,
    SoftEncoderSpec,
    SystemConfig,
    TrainingSchedule,
)
from src.services.channel import ChannelBatch, PilotMatrix, draw_noise, generate_batch, project_columns
from src.services.precoding import sum_rate_gradient, user_rates_batch
from src.services.quantizer import ScalarQuantizer, dequantize, quantize
from src.services.training import Trainer, TrainingResult, split_chunks

logger = logging.getLogger(__name__)

INFERENCE_CHUNK = 1024

QuantizerSet = Union[ScalarQuantizer, Sequence[ScalarQuantizer]]


class Composite(Module):
    """Module built from named sub-modules; tensor names are prefixed by the child's name"""

    def named_children(self) -> List[Tuple[str, Module]]:
        raise NotImplementedError

    def children(self) -> List[Module]:
        return [child for _, child in self.named_children()]

    def named_parameters(self):
        named = OrderedDict()
        for prefix, child in self.named_children():
            for name, param in child.named_parameters().items():
                named[f"{prefix}.{name}"] = param
        return named

    def named_buffers(self):
        named = OrderedDict()
        for prefix, child in self.named_children():
            for name, buffer in child.named_buffers().items():
                named[f"{prefix}.{name}"] = buffer
        return named


class PilotLayer(Module):
    """
    Trainable M x L pilot held as real and imaginary planes.

    Maps a batch of channels h (rows of length M) plus noise to the real stacking
    [Re(h^H X + z), Im(h^H X + z)] of length 2L.
    """

    def __init__(self, pilot: PilotMatrix):
        super().__init__()
        self.power = pilot.power
        self.re = Parameter(pilot.x.re, name="re")
        self.im = Parameter(pilot.x.im, name="im")

    @property
    def m(self) -> int:
        return int(self.re.value.shape[0])

    @property
    def l_pilots(self) -> int:
        return int(self.re.value.shape[1])

    def named_parameters(self):
        return OrderedDict([("re", self.re), ("im", self.im)])

    def pilot(self) -> PilotMatrix:
        return PilotMatrix(CMatrix(self.re.value.copy(), self.im.value.copy()), self.power)

    def project(self) -> None:
        """Rescale every column back to squared norm P"""
        projected = project_columns(self.re.value + 1j * self.im.value, self.power)
        self.re.value[...] = projected.real
        self.im.value[...] = projected.imag

    def forward(self, h: np.ndarray, noise: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=np.complex128)
        if h.ndim != 2 or h.shape[1] != self.m:
            raise ShapeError(
                f"Pilot layer expects channels of shape (N, {self.m}), got {h.shape}",
                details={"m": self.m, "shape": list(h.shape)},
            )
        if noise.shape != (h.shape[0], self.l_pilots):
            raise ShapeError(f"Pilot noise has shape {noise.shape}, expected {(h.shape[0], self.l_pilots)}")
        hr, hi = h.real, h.imag
        xr, xi = self.re.value, self.im.value
        self._remember((hr, hi))
        received_re = hr @ xr + hi @ xi + noise.real
        received_im = hr @ xi - hi @ xr + noise.imag
        return np.concatenate([received_re, received_im], axis=1)

    def backward(self, grad: np.ndarray) -> None:
        hr, hi = self._release()
        grad_re, grad_im = grad[:, : self.l_pilots], grad[:, self.l_pilots :]
        self.re.grad += hr.T @ grad_re - hi.T @ grad_im
        self.im.grad += hi.T @ grad_re + hr.T @ grad_im
        return None


def _apply_quantizers(quantizers: QuantizerSet, x: np.ndarray) -> np.ndarray:
    if isinstance(quantizers, ScalarQuantizer):
        return np.asarray(dequantize(quantizers, quantize(quantizers, x)), dtype=np.float64)
    if len(quantizers) != x.shape[-1]:
        raise ShapeError(f"Got {len(quantizers)} per-neuron quantizers for {x.shape[-1]} outputs")
    out = np.empty_like(x)
    for index, q in enumerate(quantizers):
        out[..., index] = dequantize(q, quantize(q, x[..., index]))
    return out


def _complex_to_rows(v: np.ndarray) -> np.ndarray:
    """(N, a, b) complex -> (N, 2ab) real, Re block first, row-major inside each block"""
    n = v.shape[0]
    return np.concatenate([v.real.reshape(n, -1), v.imag.reshape(n, -1)], axis=1)


def _rows_to_complex(rows: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    n = rows.shape[0]
    half = shape[0] * shape[1]
    return rows[:, :half].reshape((n,) + shape) + 1j * rows[:, half:].reshape((n,) + shape)


@dataclass
class E2EOutput:
    """Precoders (N, M, K), feedback messages (N, K, width) and per-user rates (N, K)"""

    v: np.ndarray
    messages: np.ndarray
    rates: np.ndarray

    @property
    def sum_rates(self) -> np.ndarray:
        return self.rates.sum(axis=-1)


class E2EModel(Composite):
    """
    Pilots, K user encoders and the BS decoder trained jointly for the sum rate.

    Hard mode ends each encoder in a sign layer emitting B bits in {-1, +1}; soft mode ends it
    in tanh with S outputs, optionally followed by a fixed scalar quantizer. With
    ``shared_encoder`` one encoder instance processes all users as a stacked batch.
    """

    def __init__(
        self,
        system: SystemConfig,
        encoder: EncoderSpec,
        decoder: DecoderSpec,
        rng: np.random.Generator,
        soft: Optional[SoftEncoderSpec] = None,
        shared_encoder: bool = False,
    ):
        super().__init__()
        if encoder.output == "tanh" and soft is None:
            raise ValueError("A tanh encoder needs a SoftEncoderSpec for its output width")
        self.system = system
        self.encoder_spec = encoder
        self.decoder_spec = decoder
        self.soft = soft if encoder.output == "tanh" else None
        self.shared_encoder = shared_encoder
        self.quantizers: Optional[QuantizerSet] = None
        self.user_side_frozen = False

        power = system.total_power
        self.pilot = PilotLayer(PilotMatrix.random(system.m, system.l_pilots, power, rng))
        width = self.message_width
        count = 1 if shared_encoder else system.k_users
        self.encoders = [self._build_encoder(width, rng) for _ in range(count)]
        self.decoder = Sequential(
            mlp(system.k_users * width, decoder.hidden, 2 * system.m * system.k_users, rng) + [UnitNormScale(power)]
        )
        logger.debug(
            f"Built {self.mode} model: M={system.m} K={system.k_users} L={system.l_pilots} "
            f"width={width} shared={shared_encoder}"
        )

    def _build_encoder(self, width: int, rng: np.random.Generator) -> Sequential:
        head: Module = SignST() if self.mode == "sign" else Tanh()
        return Sequential(mlp(2 * self.system.l_pilots, self.encoder_spec.hidden, width, rng) + [head])

    @property
    def mode(self) -> str:
        return self.encoder_spec.output

    @property
    def message_width(self) -> int:
        return self.system.b_bits if self.soft is None else self.soft.s

    @property
    def k_users(self) -> int:
        return self.system.k_users

    @property
    def l_pilots(self) -> int:
        return self.system.l_pilots

    @property
    def uses_annealing(self) -> bool:
        return self.mode == "sign"

    @property
    def feedback_bits(self) -> Optional[int]:
        """Bits crossing the feedback link per user, or None for unquantized soft outputs"""
        if self.soft is None:
            return self.system.b_bits
        if self.quantizers is None:
            return None
        return self.soft.feedback_bits

    def named_children(self):
        children: List[Tuple[str, Module]] = [("pilot", self.pilot)]
        children.extend((f"encoder.{index}", encoder) for index, encoder in enumerate(self.encoders))
        children.append(("decoder", self.decoder))
        return children

    def user_side(self) -> List[Module]:
        return [self.pilot] + list(self.encoders)

    def encoder_for(self, k: int) -> Sequential:
        return self.encoders[0 if self.shared_encoder else k]

    def train(self, mode: bool = True) -> "E2EModel":
        super().train(mode)
        if self.user_side_frozen:
            for module in self.user_side():
                module.eval()
        return self

    def freeze_user_side(self) -> None:
        """Fix pilots and encoders; they run in inference mode from now on"""
        for module in self.user_side():
            module.freeze()
            module.eval()
        self.user_side_frozen = True

    def attach_quantizers(self, quantizers: QuantizerSet) -> None:
        if self.soft is None:
            raise ValueError("Only soft-output models carry an output quantizer")
        self.quantizers = quantizers

    def set_alpha(self, alpha: float) -> None:
        for module in self.modules():
            if isinstance(module, SignST):
                module.set_alpha(alpha)

    def set_smooth(self, smooth: bool) -> None:
        for module in self.modules():
            if isinstance(module, SignST):
                module.smooth = smooth

    def project_pilots(self) -> None:
        if not self.user_side_frozen:
            self.pilot.project()

    def trainable_parameters(self) -> List[Parameter]:
        return [p for p in self.parameters() if p.trainable]

    def _check_channels(self, h: np.ndarray, noise: np.ndarray) -> None:
        expected = (self.system.k_users, self.system.m)
        if h.ndim != 3 or h.shape[1:] != expected:
            raise ShapeError(
                f"Model expects channels of shape (N, {expected[0]}, {expected[1]}), got {h.shape}",
                details={"expected": list(expected), "shape": list(h.shape)},
            )
        if noise.shape != (h.shape[0], self.system.k_users, self.system.l_pilots):
            raise ShapeError(f"Noise has shape {noise.shape}, expected {(h.shape[0],) + (expected[0], self.l_pilots)}")

    def encode(self, h: np.ndarray, noise: np.ndarray) -> np.ndarray:
        """
        User side: received pilots of every user through that user's encoder.

        Returns:
            Messages of shape (N, K, width); user k's row depends only on h[:, k] and noise[:, k]
        """
        n, k_users, _ = h.shape
        received = self.pilot.forward(h.reshape(n * k_users, -1), noise.reshape(n * k_users, -1))
        received = received.reshape(n, k_users, -1)
        if self.shared_encoder:
            stacked = self.encoders[0].forward(received.reshape(n * k_users, -1))
            return stacked.reshape(n, k_users, -1)
        return np.stack([self.encoders[k].forward(received[:, k]) for k in range(k_users)], axis=1)

    def decode(self, messages: np.ndarray) -> np.ndarray:
        """BS side: (N, K, width) messages to (N, M, K) precoders with Tr(V V^H) = P"""
        n = messages.shape[0]
        if self.quantizers is not None:
            messages = _apply_quantizers(self.quantizers, messages)
        rows = self.decoder.forward(messages.reshape(n, -1))
        return _rows_to_complex(rows, (self.system.m, self.system.k_users))

    def forward(self, h: np.ndarray, noise: np.ndarray) -> E2EOutput:
        h = np.asarray(h, dtype=np.complex128)
        self._check_channels(h, noise)
        messages = self.encode(h, noise)
        v = self.decode(messages)
        rates = user_rates_batch(h, v, self.system.sigma2)
        return E2EOutput(v=v, messages=messages, rates=rates)

    def loss(self, h: np.ndarray, noise: np.ndarray) -> float:
        """Negative mean sum rate over the batch"""
        return -float(np.mean(self.forward(h, noise).sum_rates))

    def backward(self, grad_v: np.ndarray) -> None:
        """
        Propagate dLoss/dRe(V) + j dLoss/dIm(V) through decoder, encoders and pilots.

        Stops at the decoder input when the user side is frozen or a quantizer sits in the path.
        """
        n = grad_v.shape[0]
        grad_messages = self.decoder.backward(_complex_to_rows(grad_v)).reshape(n, self.k_users, -1)
        if self.user_side_frozen or self.quantizers is not None:
            return
        if self.shared_encoder:
            grad_received = self.encoders[0].backward(grad_messages.reshape(n * self.k_users, -1))
        else:
            grad_received = np.concatenate(
                [self.encoders[k].backward(grad_messages[:, k])[:, None, :] for k in range(self.k_users)], axis=1
            ).reshape(n * self.k_users, -1)
        self.pilot.backward(grad_received)

    def loss_and_backward(self, h: np.ndarray, noise: np.ndarray) -> float:
        """Forward, then accumulate gradients of the negative mean sum rate"""
        h = np.asarray(h, dtype=np.complex128)
        self._check_channels(h, noise)
        messages = self.encode(h, noise)
        v = self.decode(messages)
        rates, grad_v = sum_rate_gradient(h, v, self.system.sigma2)
        self.backward(-grad_v / h.shape[0])
        return -float(np.mean(rates))

    def precode(self, channels: ChannelBatch, noise: Optional[np.ndarray]) -> np.ndarray:
        """Inference-mode precoders for a whole batch, evaluated in fixed-size chunks"""
        if noise is None:
            raise ShapeError("The learned system needs pilot noise for every test channel")
        self._check_channels(channels.h, noise)
        was_training = self.training
        self.eval()
        try:
            chunks = [
                self.decode(self.encode(channels.h[start:stop], noise[start:stop]))
                for start, stop in split_chunks(channels.n, INFERENCE_CHUNK)
            ]
        finally:
            self.train(was_training)
        return np.concatenate(chunks, axis=0)


class ChannelEstimatorModel(Composite):
    """
    Shared pilots, encoder and decoder that reconstruct each user's channel from B feedback
    bits; trained for the channel MSE and used by every user alike.
    """

    def __init__(
        self,
        system: SystemConfig,
        encoder: EncoderSpec,
        decoder: DecoderSpec,
        rng: np.random.Generator,
    ):
        super().__init__()
        self.system = system
        self.pilot = PilotLayer(PilotMatrix.random(system.m, system.l_pilots, system.total_power, rng))
        self.encoder = Sequential(mlp(2 * system.l_pilots, encoder.hidden, system.b_bits, rng) + [SignST()])
        self.decoder = Sequential(mlp(system.b_bits, decoder.hidden, 2 * system.m, rng))

    @property
    def l_pilots(self) -> int:
        return self.system.l_pilots

    @property
    def feedback_bits(self) -> int:
        return self.system.b_bits

    def named_children(self):
        return [("pilot", self.pilot), ("encoder", self.encoder), ("decoder", self.decoder)]

    def set_alpha(self, alpha: float) -> None:
        for module in self.encoder.find(SignST):
            module.set_alpha(alpha)

    def trainable_parameters(self) -> List[Parameter]:
        return [p for p in self.parameters() if p.trainable]

    def forward(self, h: np.ndarray, noise: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Returns:
            (estimates of shape (N, K, M), bits of shape (N, K, B))
        """
        h = np.asarray(h, dtype=np.complex128)
        if h.ndim != 3 or h.shape[2] != self.system.m:
            raise ShapeError(f"Estimator expects channels of shape (N, K, {self.system.m}), got {h.shape}")
        n, k_users, m = h.shape
        received = self.pilot.forward(h.reshape(n * k_users, m), noise.reshape(n * k_users, -1))
        bits = self.encoder.forward(received)
        rows = self.decoder.forward(bits)
        estimates = rows[:, :m] + 1j * rows[:, m:]
        return estimates.reshape(n, k_users, m), bits.reshape(n, k_users, -1)

    def loss_and_backward(self, h: np.ndarray, noise: np.ndarray) -> float:
        """Mean of ||h_hat - h||^2 per user channel, with gradients accumulated"""
        estimates, _ = self.forward(h, noise)
        error = (estimates - h).reshape(-1, self.system.m)
        count = error.shape[0]
        grad = 2.0 * np.concatenate([error.real, error.imag], axis=1) / count
        self.pilot.backward(self.encoder.backward(self.decoder.backward(grad)))
        return float(np.mean(np.sum(np.abs(error) ** 2, axis=-1)))

    def estimate(self, h: np.ndarray, noise: np.ndarray) -> np.ndarray:
        """Inference-mode channel estimates, chunked"""
        was_training = self.training
        self.eval()
        try:
            chunks = [
                self.forward(h[start:stop], noise[start:stop])[0] for start, stop in split_chunks(h.shape[0], INFERENCE_CHUNK)
            ]
        finally:
            self.train(was_training)
        return np.concatenate(chunks, axis=0)


def build_model(
    system: SystemConfig,
    encoder: EncoderSpec,
    decoder: DecoderSpec,
    seeds: SeedTree,
    soft: Optional[SoftEncoderSpec] = None,
    shared_encoder: bool = False,
) -> E2EModel:
    """Fresh model whose initial parameters come from the ``init`` leaf of the seed tree"""
    return E2EModel(system, encoder, decoder, seeds.stream("init", 0), soft=soft, shared_encoder=shared_encoder)


class SumRateObjective:
    """Negative sum rate on fresh channels; validated on a fixed channel and noise set"""

    def __init__(self, model: E2EModel, dist: ChannelDistribution, seeds: SeedTree, validation_size: int):
        self.model = model
        self.dist = dist
        system = model.system
        shape = (validation_size, system.k_users, system.l_pilots)
        self.validation = generate_batch(dist, system.array, system.k_users, validation_size, seeds.stream("validation", 0))
        self.validation_noise = draw_noise(seeds.stream("validation", 1), shape, system.sigma2)

    def trainable_parameters(self) -> List[Parameter]:
        return self.model.trainable_parameters()

    def sample_batch(self, channel_rng: np.random.Generator, noise_rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
        system = self.model.system
        channels = generate_batch(self.dist, system.array, system.k_users, n, channel_rng)
        noise = complex_gaussian(noise_rng, (n, system.k_users, system.l_pilots), system.sigma2)
        return channels.h, noise

    def step_loss(self, batch: Tuple[np.ndarray, np.ndarray]) -> float:
        h, noise = batch
        return self.model.loss_and_backward(h, noise)

    def validate(self) -> float:
        v = self.model.precode(self.validation, self.validation_noise)
        rates = user_rates_batch(self.validation.h, v, self.model.system.sigma2)
        return float(np.mean(rates.sum(axis=-1)))

    def after_step(self) -> None:
        self.model.project_pilots()

    def set_alpha(self, alpha: float) -> None:
        self.model.set_alpha(alpha)


class ChannelMseObjective:
    """Channel MSE of the shared estimator on single-user draws; validation metric is -MSE"""

    def __init__(self, model: ChannelEstimatorModel, dist: ChannelDistribution, seeds: SeedTree, validation_size: int):
        self.model = model
        self.dist = dist
        system = model.system
        self.validation = generate_batch(dist, system.array, 1, validation_size, seeds.stream("validation", 0))
        self.validation_noise = draw_noise(seeds.stream("validation", 1), (validation_size, 1, system.l_pilots), system.sigma2)

    def trainable_parameters(self) -> List[Parameter]:
        return self.model.trainable_parameters()

    def sample_batch(self, channel_rng: np.random.Generator, noise_rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
        system = self.model.system
        channels = generate_batch(self.dist, system.array, 1, n, channel_rng)
        return channels.h, complex_gaussian(noise_rng, (n, 1, system.l_pilots), system.sigma2)

    def step_loss(self, batch: Tuple[np.ndarray, np.ndarray]) -> float:
        h, noise = batch
        return self.model.loss_and_backward(h, noise)

    def validate(self) -> float:
        estimates = self.model.estimate(self.validation.h, self.validation_noise)
        return -float(np.mean(np.sum(np.abs(estimates - self.validation.h) ** 2, axis=-1)))

    def after_step(self) -> None:
        self.model.pilot.project()

    def set_alpha(self, alpha: float) -> None:
        self.model.set_alpha(alpha)


def train(
    model: E2EModel,
    schedule: TrainingSchedule,
    dist: ChannelDistribution,
    seeds: SeedTree,
    checkpoint_stem: Optional[str] = None,
    config_hash: str = "",
    metadata: Optional[Dict[str, Any]] = None,
) -> TrainingResult:
    """
    Train an end-to-end model for the sum rate.

    Args:
        model: Fresh or checkpointed model (frozen blocks stay untouched)
        schedule: Optimizer, annealing and stopping settings
        dist: Channel prior used for training and validation draws
        seeds: Seed tree of the run
        checkpoint_stem: Where to write the best model, if anywhere

    Returns:
        TrainingResult with the model restored to its best validation sum rate
    """
    objective = SumRateObjective(model, dist, seeds, schedule.validation_size)
    trainer = Trainer(
        objective,
        schedule,
        seeds,
        checkpoint_stem=checkpoint_stem,
        config_hash=config_hash,
        metadata=metadata,
        uses_annealing=model.uses_annealing,
    )
    return trainer.run()


def train_mse_estimator(
    system: SystemConfig,
    encoder: EncoderSpec,
    decoder: DecoderSpec,
    schedule: TrainingSchedule,
    dist: ChannelDistribution,
    seeds: SeedTree,
    checkpoint_stem: Optional[str] = None,
    config_hash: str = "",
) -> TrainingResult:
    """Train the channel-reconstruction baseline on the channel MSE"""
    model = ChannelEstimatorModel(system, encoder, decoder, seeds.stream("init", 0))
    objective = ChannelMseObjective(model, dist, seeds, schedule.validation_size)
    return Trainer(objective, schedule, seeds, checkpoint_stem=checkpoint_stem, config_hash=config_hash).run()


class PrecodingPipeline(Protocol):
    """Anything that turns a test batch (and its pilot noise) into precoders"""

    l_pilots: Optional[int]

    def precode(self, channels: ChannelBatch, noise: Optional[np.ndarray]) -> np.ndarray: ...


@dataclass(frozen=True)
class TestSet:
    """
    Fixed test channels plus deterministic pilot noise per pilot length.

    Every method evaluated with the same pilot length sees the same noise.
    """

    __test__ = False

    channels: ChannelBatch
    seeds: SeedTree
    sigma2: float

    @property
    def size(self) -> int:
        return self.channels.n

    def noise(self, l_pilots: int) -> np.ndarray:
        if l_pilots < 1:
            raise ValueError(f"Pilot length must be positive, got {l_pilots}")
        shape = (self.channels.n, self.channels.k_users, l_pilots)
        return draw_noise(self.seeds.stream("test", l_pilots), shape, self.sigma2)


def build_test_set(dist: ChannelDistribution, system: SystemConfig, n: int, seeds: SeedTree) -> TestSet:
    channels = generate_batch(dist, system.array, system.k_users, n, seeds.stream("test", 0))
    return TestSet(channels=channels, seeds=seeds, sigma2=system.sigma2)


class EvaluationResult(BaseModel):
    """Mean sum rate, its standard error and the per-user mean rates over a test set"""

    sum_rate: float
    sum_rate_stderr: float
    per_user_rates: List[float]
    test_size: int


def evaluate(pipeline: PrecodingPipeline, test_set: TestSet, sigma2: Optional[float] = None) -> EvaluationResult:
    """
    Average rates of a learned model or baseline pipeline on a fixed test set.

    Args:
        pipeline: Object with ``precode(channels, noise)`` and ``l_pilots`` (None when no pilots are used)
        test_set: Channels and noise source
        sigma2: Noise variance for the rate (defaults to the test set's)

    Returns:
        EvaluationResult
    """
    sigma2 = test_set.sigma2 if sigma2 is None else sigma2
    noise = test_set.noise(pipeline.l_pilots) if pipeline.l_pilots else None
    v = pipeline.precode(test_set.channels, noise)
    rates = user_rates_batch(test_set.channels.h, v, sigma2)
    sums = rates.sum(axis=-1)
    stderr = float(np.std(sums, ddof=1) / np.sqrt(sums.size)) if sums.size > 1 else 0.0
    result = EvaluationResult(
        sum_rate=float(np.mean(sums)),
        sum_rate_stderr=stderr,
        per_user_rates=[float(r) for r in rates.mean(axis=0)],
        test_size=int(sums.size),
    )
    logger.debug(f"Evaluated {type(pipeline).__name__}: {result.sum_rate:.4f} +/- {result.sum_rate_stderr:.4f}")
    return result
