"""
Conventional precoding pipelines: perfect CSIT, parametric feedback of the true channel,
OMP-based estimation with and without quantized feedback, and the MSE-trained estimator.
"""
import logging
from typing import Optional, Sequence

import numpy as np

from src.lib.error.handler import ShapeError
from src.lib.nn.layers import Module
from src.models.experiment import GridPoint
from src.models.system import SystemConfig
from src.services.channel import ChannelBatch, PilotMatrix, channel_from_paths, receive_pilots_batch
from src.services.dsc import ChannelEstimatorModel, train_mse_estimator
from src.services.precoding import precode_batch
from src.services.quantizer import ChannelParamCodec, ParamBitAllocation, channel_params, params_to_paths
from src.services.sparse import AngularDictionary, estimate_channels_omp
from src.tools.base import Method, RunContext

logger = logging.getLogger(__name__)


def feedback_paths(gains: np.ndarray, aods: np.ndarray, count: int, assumed_lp: int) -> np.ndarray:
    """
    Canonical parameters of the ``assumed_lp`` strongest of ``count`` paths, zero-padded when
    fewer paths exist.
    """
    params = channel_params(gains[:count], aods[:count], assumed_lp)
    if params.size < 3 * assumed_lp:
        params = np.concatenate([params, np.zeros(3 * assumed_lp - params.size)])
    return params


def quantized_channels(
    gains: np.ndarray,
    aods: np.ndarray,
    counts: np.ndarray,
    alloc: ParamBitAllocation,
    codec: ChannelParamCodec,
    system: SystemConfig,
) -> np.ndarray:
    """
    Channels the BS rebuilds from per-user parametric feedback.

    Args:
        gains: Path gains of shape (N, K, paths)
        aods: Path angles of shape (N, K, paths)
        counts: Valid path count per (draw, user)
        alloc: Bit allocation over the fed-back parameters
        codec: Fitted parameter quantizers
        system: System dimensions

    Returns:
        Complex channel estimates of shape (N, K, M)
    """
    n, k_users = counts.shape
    out = np.zeros((n, k_users, system.m), dtype=np.complex128)
    for draw in range(n):
        for k in range(k_users):
            params = feedback_paths(gains[draw, k], aods[draw, k], int(counts[draw, k]), alloc.lp)
            bits = codec.encode(params, alloc)
            path_gains, path_aods = params_to_paths(codec.decode(bits, alloc))
            out[draw, k] = channel_from_paths(path_gains, path_aods, system.array)
    return out


class CsitPipeline:
    """Precoder computed from the true channels"""

    l_pilots: Optional[int] = None

    def __init__(self, precoder: str, power: float):
        self.precoder = precoder
        self.power = power

    def precode(self, channels: ChannelBatch, noise: Optional[np.ndarray]) -> np.ndarray:
        return precode_batch(self.precoder, channels.h, self.power)


class CsirQuantizedPipeline:
    """Users know their channels exactly and feed back B quantized path parameters"""

    l_pilots: Optional[int] = None

    def __init__(self, precoder: str, system: SystemConfig, codec: ChannelParamCodec, alloc: ParamBitAllocation):
        self.precoder = precoder
        self.system = system
        self.codec = codec
        self.alloc = alloc

    def precode(self, channels: ChannelBatch, noise: Optional[np.ndarray]) -> np.ndarray:
        estimates = quantized_channels(channels.gains, channels.aods, channels.lp, self.alloc, self.codec, self.system)
        return precode_batch(self.precoder, estimates, self.system.total_power)


class OmpPipeline:
    """
    Users estimate their channels from noisy pilots with OMP; the estimate reaches the BS either
    exactly or as B quantized path parameters.
    """

    def __init__(
        self,
        precoder: str,
        system: SystemConfig,
        pilot: PilotMatrix,
        dictionary: AngularDictionary,
        lp: int,
        codec: Optional[ChannelParamCodec] = None,
        alloc: Optional[ParamBitAllocation] = None,
    ):
        self.precoder = precoder
        self.system = system
        self.pilot = pilot
        self.dictionary = dictionary
        self.lp = lp
        self.codec = codec
        self.alloc = alloc
        self.l_pilots = system.l_pilots

    def precode(self, channels: ChannelBatch, noise: Optional[np.ndarray]) -> np.ndarray:
        if noise is None:
            raise ShapeError("OMP estimation needs pilot noise")
        received = receive_pilots_batch(channels.h, self.pilot, noise)
        estimates, gains, angles = estimate_channels_omp(received, self.pilot, self.dictionary, self.lp)
        if self.codec is not None and self.alloc is not None:
            counts = np.full(channels.lp.shape, self.lp)
            estimates = quantized_channels(gains, angles, counts, self.alloc, self.codec, self.system)
        return precode_batch(self.precoder, estimates, self.system.total_power)


class EstimatorPipeline:
    """Channels reconstructed by the MSE-trained network, then MRT or ZF"""

    def __init__(self, precoder: str, model: ChannelEstimatorModel):
        self.precoder = precoder
        self.model = model
        self.l_pilots = model.l_pilots

    def precode(self, channels: ChannelBatch, noise: Optional[np.ndarray]) -> np.ndarray:
        if noise is None:
            raise ShapeError("The channel estimator needs pilot noise")
        estimates = self.model.estimate(channels.h, noise)
        return precode_batch(self.precoder, estimates, self.model.system.total_power)


class CsitMethod(Method):
    description = "MRT or ZF with perfect channel knowledge at the BS"

    def __init__(self, precoder: str):
        self.precoder = precoder
        self.name = f"{precoder}-csit"

    def pipeline(self, point: GridPoint, context: RunContext) -> CsitPipeline:
        return CsitPipeline(self.precoder, point.system.total_power)


class CsirQuantizedMethod(Method):
    description = "Perfect CSI at the users, B-bit Lloyd-Max feedback of the strongest path parameters"

    def __init__(self, precoder: str):
        self.precoder = precoder
        self.name = f"{precoder}-csir-quantized"

    def _codec(self, point: GridPoint, context: RunContext):
        alloc = ParamBitAllocation.allocate(point.system.b_bits, context.config.assumed_lp)
        return context.codec(alloc.lp, alloc.bits_per_param), alloc

    def prepare(self, points: Sequence[GridPoint], context: RunContext) -> None:
        for point in points:
            self._codec(point, context)

    def pipeline(self, point: GridPoint, context: RunContext) -> CsirQuantizedPipeline:
        codec, alloc = self._codec(point, context)
        return CsirQuantizedPipeline(self.precoder, point.system, codec, alloc)


class OmpMethod(Method):
    description = "OMP channel estimation from random pilots, unquantized or B-bit parametric feedback"

    def __init__(self, precoder: str, quantized: bool):
        self.precoder = precoder
        self.quantized = quantized
        self.name = f"{precoder}-omp-{'quantized' if quantized else 'infinite'}"

    def _codec(self, point: GridPoint, context: RunContext):
        alloc = ParamBitAllocation.allocate(point.system.b_bits, context.config.assumed_lp)
        return context.codec(alloc.lp, alloc.bits_per_param), alloc

    def prepare(self, points: Sequence[GridPoint], context: RunContext) -> None:
        if self.quantized:
            for point in points:
                self._codec(point, context)

    def pipeline(self, point: GridPoint, context: RunContext) -> OmpPipeline:
        codec, alloc = self._codec(point, context) if self.quantized else (None, None)
        return OmpPipeline(
            self.precoder,
            point.system,
            context.baseline_pilot(point.system),
            context.dictionary(point.system),
            context.config.assumed_lp,
            codec=codec,
            alloc=alloc,
        )


class DnnMseMethod(Method):
    description = "Shared network trained for channel MSE, then MRT or ZF on the reconstructed channels"
    trains = True

    def __init__(self, precoder: str):
        self.precoder = precoder
        self.name = f"{precoder}-dnn-mse"

    def _payload(self, point: GridPoint, context: RunContext) -> dict:
        single = SystemConfig(**{**point.system.model_dump(), "k_users": 1})
        payload = context.base_payload()
        payload.update(
            {
                "kind": "dnn-mse",
                "system": single.model_dump(),
                "encoder": context.encoder.model_dump(),
                "decoder": context.decoder.model_dump(),
            }
        )
        return payload

    def _model(self, point: GridPoint, context: RunContext) -> Module:
        payload = self._payload(point, context)
        digest, seeds = context.seeds_for(payload)
        system = SystemConfig(**payload["system"])
        stem = context.stem("dnn-mse", digest)
        model = ChannelEstimatorModel(system, context.encoder, context.decoder, seeds.stream("init", 0))

        def train_fn(path: str):
            return train_mse_estimator(
                system,
                context.encoder,
                context.decoder,
                context.schedule,
                context.train_distribution(),
                seeds,
                checkpoint_stem=path,
                config_hash=digest,
            )

        return context.load_or_train(f"DNN-MSE estimator (L={system.l_pilots}, B={system.b_bits})", stem, digest, model, train_fn)

    def prepare(self, points: Sequence[GridPoint], context: RunContext) -> None:
        for point in points:
            self._model(point, context)

    def pipeline(self, point: GridPoint, context: RunContext) -> EstimatorPipeline:
        model = self._model(point, context)
        return EstimatorPipeline(self.precoder, model)
