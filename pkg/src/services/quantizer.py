"""
Lloyd-Max scalar quantizers and the quantized channel-parameter feedback baseline.
"""
import json
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.lib.error.handler import AllocationError, DegenerateInputError, QuantizerError
from src.lib.numerics import CMatrix, complex_gaussian
from src.models.system import ArrayConfig, ChannelDistribution
from src.services.channel import channel_from_paths

logger = logging.getLogger(__name__)

LLOYD_TOLERANCE = 1e-6
LLOYD_MAX_ITERATIONS = 500


class ScalarQuantizer(BaseModel):
    """Representation levels and decision boundaries of a fixed-rate scalar quantizer"""

    model_config = ConfigDict(frozen=True)

    levels: List[float]
    boundaries: List[float]

    @model_validator(mode="after")
    def _check_codebook(self) -> "ScalarQuantizer":
        levels = np.asarray(self.levels)
        count = levels.size
        if count < 2 or count & (count - 1):
            raise ValueError(f"Number of levels must be a power of two >= 2, got {count}")
        if len(self.boundaries) != count - 1:
            raise ValueError("boundaries must have one entry fewer than levels")
        if np.any(np.diff(levels) <= 0):
            raise ValueError("levels must be strictly increasing")
        return self

    @property
    def q_bits(self) -> int:
        return int(np.log2(len(self.levels)))

    @property
    def level_array(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=np.float64)

    @property
    def boundary_array(self) -> np.ndarray:
        return np.asarray(self.boundaries, dtype=np.float64)

    @classmethod
    def from_levels(cls, levels: Sequence[float]) -> "ScalarQuantizer":
        """Nearest-neighbour quantizer for the given levels (boundaries at midpoints)"""
        levels = np.asarray(levels, dtype=np.float64)
        return cls(levels=levels.tolist(), boundaries=(0.5 * (levels[:-1] + levels[1:])).tolist())

    def save(self, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w") as f:
            f.write(self.model_dump_json(indent=2))

    @classmethod
    def load(cls, path: str) -> "ScalarQuantizer":
        with open(path, "r") as f:
            return cls.model_validate_json(f.read())


def quantize(q: ScalarQuantizer, x: Union[float, np.ndarray]) -> Union[int, np.ndarray]:
    """
    Nearest-level index; a value exactly on a boundary maps to the lower index.
    """
    indices = np.searchsorted(q.boundary_array, np.asarray(x, dtype=np.float64), side="left")
    if np.ndim(indices) == 0:
        return int(indices)
    return indices.astype(np.int64)


def dequantize(q: ScalarQuantizer, index: Union[int, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Representation level for an index.

    Raises:
        QuantizerError: If an index is outside [0, 2^Q)
    """
    idx = np.asarray(index)
    if not np.issubdtype(idx.dtype, np.integer):
        raise QuantizerError(f"Quantizer indices must be integers, got {idx.dtype}")
    if np.any(idx < 0) or np.any(idx >= len(q.levels)):
        raise QuantizerError(
            f"Quantizer index out of range [0, {len(q.levels)})",
            details={"levels": len(q.levels)},
        )
    values = q.level_array[idx]
    if np.ndim(values) == 0:
        return float(values)
    return values


def distortion(q: ScalarQuantizer, samples: np.ndarray) -> float:
    """Mean squared quantization error on ``samples``"""
    samples = np.asarray(samples, dtype=np.float64)
    return float(np.mean((samples - q.level_array[quantize(q, samples)]) ** 2))


def uniform_quantizer(low: float, high: float, q_bits: int) -> ScalarQuantizer:
    """Midrise uniform quantizer with 2^Q cells on [low, high]"""
    count = 2**q_bits
    step = (high - low) / count
    return ScalarQuantizer.from_levels(low + step * (np.arange(count) + 0.5))


def lloyd_max_iterate(
    samples: np.ndarray,
    q_bits: int,
    tol: float = LLOYD_TOLERANCE,
    max_iter: int = LLOYD_MAX_ITERATIONS,
) -> Tuple[ScalarQuantizer, List[float]]:
    """
    Lloyd-Max design on an empirical distribution.

    Alternates the nearest-neighbour (boundaries at midpoints) and centroid (levels at cell
    means) conditions until no level moves by more than ``tol`` or ``max_iter`` is reached.

    Args:
        samples: Training samples
        q_bits: Resolution Q (2^Q levels)
        tol: Convergence threshold on level movement
        max_iter: Iteration cap

    Returns:
        (quantizer, distortion after each centroid update)

    Raises:
        DegenerateInputError: If there are fewer distinct samples than levels
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    count = 2**q_bits
    distinct = np.unique(samples)
    if distinct.size < count:
        raise DegenerateInputError(
            f"Lloyd-Max with {count} levels needs at least {count} distinct samples, got {distinct.size}",
            details={"distinct": int(distinct.size), "levels": count},
        )

    ordered = np.sort(samples)
    total = ordered.size
    first_moment = np.concatenate([[0.0], np.cumsum(ordered)])
    second_moment = np.concatenate([[0.0], np.cumsum(ordered**2)])

    def cell_edges(levels: np.ndarray) -> np.ndarray:
        # Cell i holds b[i-1] < x <= b[i]; edges index into the sorted samples.
        boundaries = 0.5 * (levels[:-1] + levels[1:])
        return np.concatenate([[0], np.searchsorted(ordered, boundaries, side="right"), [total]])

    # Means of equal-size chunks of the distinct values: strictly increasing start.
    levels = np.array([chunk.mean() for chunk in np.array_split(distinct, count)])
    history: List[float] = []
    for iteration in range(1, max_iter + 1):
        edges = cell_edges(levels)
        sizes = np.diff(edges)
        sums = np.diff(first_moment[edges])
        empty = sizes == 0
        if np.any(empty):
            logger.warning(f"Lloyd-Max iteration {iteration}: {int(empty.sum())} empty cells keep their level")
        updated = np.where(empty, levels, sums / np.maximum(sizes, 1))
        movement = float(np.max(np.abs(updated - levels)))
        levels = updated

        edges = cell_edges(levels)
        sizes = np.diff(edges)
        sums = np.diff(first_moment[edges])
        squares = np.diff(second_moment[edges])
        error = np.sum(squares - 2.0 * levels * sums + sizes * levels**2)
        history.append(float(max(error, 0.0) / total))
        logger.debug(f"Lloyd-Max iteration {iteration}: distortion={history[-1]:.6e} movement={movement:.3e}")
        if movement < tol:
            break

    quantizer = ScalarQuantizer.from_levels(levels)
    logger.debug(f"Lloyd-Max fitted {count} levels in {len(history)} iterations")
    return quantizer, history


def lloyd_max_fit(
    samples: np.ndarray,
    q_bits: int,
    tol: float = LLOYD_TOLERANCE,
    max_iter: int = LLOYD_MAX_ITERATIONS,
) -> ScalarQuantizer:
    """Fit a Lloyd-Max quantizer; see ``lloyd_max_iterate``"""
    quantizer, _ = lloyd_max_iterate(samples, q_bits, tol=tol, max_iter=max_iter)
    return quantizer


class ParamBitAllocation(BaseModel):
    """
    Bits per real channel parameter, laid out path by path as (Re alpha, Im alpha, theta).
    """

    model_config = ConfigDict(frozen=True)

    bits_per_param: List[int]
    total: int = Field(..., ge=1)

    @model_validator(mode="after")
    def _check_total(self) -> "ParamBitAllocation":
        if len(self.bits_per_param) % 3:
            raise ValueError("bits_per_param must hold three entries per path")
        if sum(self.bits_per_param) != self.total:
            raise ValueError(f"Allocation sums to {sum(self.bits_per_param)}, expected {self.total}")
        if any(bits < 1 for bits in self.bits_per_param):
            raise ValueError("every parameter needs at least one bit")
        return self

    @property
    def lp(self) -> int:
        return len(self.bits_per_param) // 3

    @classmethod
    def allocate(cls, b_bits: int, lp: int) -> "ParamBitAllocation":
        """
        Split B bits over 3*L_p real parameters.

        Every parameter gets floor(B / 3L_p) bits; the remainder goes one bit at a time to the
        angles (path order), then the real gains, then the imaginary gains.

        Raises:
            AllocationError: If B < 3*L_p
        """
        slots = 3 * lp
        if lp < 1 or b_bits < slots:
            raise AllocationError(
                f"{b_bits} feedback bits cannot give each of {slots} parameters one bit",
                details={"b_bits": b_bits, "lp": lp},
            )
        base, remainder = divmod(b_bits, slots)
        bits = np.full((lp, 3), base, dtype=int)
        for column in (2, 0, 1):
            extra = min(remainder, lp)
            bits[:extra, column] += 1
            remainder -= extra
        return cls(bits_per_param=bits.ravel().tolist(), total=b_bits)


def canonical_paths(gains: np.ndarray, aods: np.ndarray, lp: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Keep the ``lp`` strongest paths (by |alpha|) and order them by ascending AoD.
    """
    gains = np.asarray(gains, dtype=np.complex128)
    aods = np.asarray(aods, dtype=np.float64)
    if lp is not None and lp < gains.size:
        strongest = np.argsort(-np.abs(gains), kind="stable")[:lp]
        gains, aods = gains[strongest], aods[strongest]
    order = np.argsort(aods, kind="stable")
    return gains[order], aods[order]


def channel_params(gains: np.ndarray, aods: np.ndarray, lp: Optional[int] = None) -> np.ndarray:
    """Canonical real parameter vector (Re alpha_l, Im alpha_l, theta_l) for l in AoD order"""
    gains, aods = canonical_paths(gains, aods, lp)
    return np.stack([gains.real, gains.imag, aods], axis=1).ravel()


class ChannelParamCodec:
    """
    Lloyd-Max quantizers per parameter class: one for real/imaginary gain components, one per
    AoD order statistic, each fitted for every bit count the allocation needs.
    """

    def __init__(
        self,
        dist: ChannelDistribution,
        lp: int,
        gain_quantizers: Optional[Dict[int, ScalarQuantizer]] = None,
        angle_quantizers: Optional[Dict[Tuple[int, int], ScalarQuantizer]] = None,
    ):
        self.dist = dist
        self.lp = lp
        self.gain_quantizers: Dict[int, ScalarQuantizer] = dict(gain_quantizers or {})
        self.angle_quantizers: Dict[Tuple[int, int], ScalarQuantizer] = dict(angle_quantizers or {})

    @classmethod
    def fit(
        cls,
        dist: ChannelDistribution,
        lp: int,
        bit_counts: Sequence[int],
        rng: np.random.Generator,
        n_samples: int = 1_000_000,
    ) -> "ChannelParamCodec":
        """
        Fit quantizers from samples of the channel prior.

        Args:
            dist: Channel prior
            lp: Number of fed-back paths
            bit_counts: Resolutions to fit
            rng: Generator for the training samples
            n_samples: Training samples per parameter class
        """
        gains = complex_gaussian(rng, (n_samples, lp), dist.gain_variance)
        aods = np.sort(rng.uniform(dist.aod_low, dist.aod_high, size=(n_samples, lp)), axis=1)
        gain_samples = np.concatenate([gains.real.ravel(), gains.imag.ravel()])
        codec = cls(dist, lp)
        for bits in sorted(set(int(b) for b in bit_counts)):
            codec.gain_quantizers[bits] = lloyd_max_fit(gain_samples, bits)
            for order in range(lp):
                codec.angle_quantizers[(order, bits)] = lloyd_max_fit(aods[:, order], bits)
        logger.info(f"Fitted channel-parameter codec for L_p={lp}, bit counts {sorted(set(bit_counts))}")
        return codec

    def _quantizer(self, slot: int, bits: int) -> ScalarQuantizer:
        order, kind = divmod(slot, 3)
        try:
            if kind == 2:
                return self.angle_quantizers[(order, bits)]
            return self.gain_quantizers[bits]
        except KeyError:
            raise QuantizerError(
                f"No {bits}-bit quantizer fitted for parameter slot {slot}",
                details={"slot": slot, "bits": bits},
            ) from None

    def encode(self, params: np.ndarray, alloc: ParamBitAllocation) -> np.ndarray:
        """Quantize canonical parameters into a 0/1 bit string of length B (MSB first per parameter)"""
        params = np.asarray(params, dtype=np.float64)
        if params.size != len(alloc.bits_per_param):
            raise AllocationError(
                f"Expected {len(alloc.bits_per_param)} parameters, got {params.size}",
                details={"params": int(params.size)},
            )
        bits: List[int] = []
        for slot, (value, width) in enumerate(zip(params, alloc.bits_per_param)):
            index = quantize(self._quantizer(slot, width), value)
            bits.extend((index >> shift) & 1 for shift in range(width - 1, -1, -1))
        return np.asarray(bits, dtype=np.uint8)

    def decode(self, bits: np.ndarray, alloc: ParamBitAllocation) -> np.ndarray:
        """Dequantized canonical parameters from a bit string"""
        bits = np.asarray(bits, dtype=np.int64)
        if bits.size != alloc.total:
            raise AllocationError(f"Expected {alloc.total} bits, got {bits.size}")
        values = []
        offset = 0
        for slot, width in enumerate(alloc.bits_per_param):
            index = int(np.dot(bits[offset : offset + width], 1 << np.arange(width - 1, -1, -1)))
            values.append(dequantize(self._quantizer(slot, width), index))
            offset += width
        return np.asarray(values)

    def save(self, path: str) -> None:
        payload = {
            "lp": self.lp,
            "distribution": self.dist.model_dump(),
            "gain": {str(bits): q.model_dump() for bits, q in sorted(self.gain_quantizers.items())},
            "angle": {f"{order}:{bits}": q.model_dump() for (order, bits), q in sorted(self.angle_quantizers.items())},
        }
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w") as f:
            json.dump(payload, f, indent=2)

    @classmethod
    def load(cls, path: str) -> "ChannelParamCodec":
        with open(path, "r") as f:
            payload = json.load(f)
        gain = {int(bits): ScalarQuantizer(**q) for bits, q in payload["gain"].items()}
        angle = {}
        for key, q in payload["angle"].items():
            order, bits = key.split(":")
            angle[(int(order), int(bits))] = ScalarQuantizer(**q)
        return cls(ChannelDistribution(**payload["distribution"]), payload["lp"], gain, angle)


def params_to_paths(params: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Split a canonical parameter vector into complex gains and angles"""
    triples = np.asarray(params, dtype=np.float64).reshape(-1, 3)
    return triples[:, 0] + 1j * triples[:, 1], triples[:, 2]


def quantize_channel_params(
    real_params: np.ndarray,
    alloc: ParamBitAllocation,
    codec: ChannelParamCodec,
) -> np.ndarray:
    """Bit string of length B for the canonical parameter vector"""
    return codec.encode(real_params, alloc)


def reconstruct_channel(
    bits: np.ndarray,
    alloc: ParamBitAllocation,
    codec: ChannelParamCodec,
    cfg: ArrayConfig,
) -> CMatrix:
    """Channel vector rebuilt from fed-back bits by the multipath model"""
    gains, aods = params_to_paths(codec.decode(bits, alloc))
    return CMatrix.from_complex(channel_from_paths(gains, aods, cfg).reshape(-1, 1))
