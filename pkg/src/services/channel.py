"""
Sparse multipath channel generation and downlink pilot reception.
"""
import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.lib.error.handler import ShapeError
from src.lib.numerics import CMatrix, as_complex, complex_gaussian
from src.models.system import ArrayConfig, ChannelDistribution

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChannelRealization:
    """One user's channel: path gains, angles of departure and the resulting M x 1 vector"""

    gains: np.ndarray
    aods: np.ndarray
    h: CMatrix

    @property
    def lp(self) -> int:
        return int(self.gains.shape[0])


@dataclass(frozen=True)
class ChannelBatch:
    """
    ``n`` draws of K user channels.

    ``gains``/``aods`` are zero-padded to the largest admissible path count; ``lp`` holds the
    actual path count of every (draw, user) pair.
    """

    h: np.ndarray
    gains: np.ndarray
    aods: np.ndarray
    lp: np.ndarray

    @property
    def n(self) -> int:
        return int(self.h.shape[0])

    @property
    def k_users(self) -> int:
        return int(self.h.shape[1])

    @property
    def m(self) -> int:
        return int(self.h.shape[2])

    def __len__(self) -> int:
        return self.n

    def user(self, draw: int, k: int) -> ChannelRealization:
        """Single-user view of one draw"""
        count = int(self.lp[draw, k])
        return ChannelRealization(
            gains=self.gains[draw, k, :count].copy(),
            aods=self.aods[draw, k, :count].copy(),
            h=CMatrix.from_complex(self.h[draw, k]),
        )

    def subset(self, index: np.ndarray) -> "ChannelBatch":
        return ChannelBatch(self.h[index], self.gains[index], self.aods[index], self.lp[index])


@dataclass(frozen=True)
class PilotMatrix:
    """M x L downlink pilot with a per-column power constraint"""

    x: CMatrix
    power: float

    @property
    def m(self) -> int:
        return self.x.rows

    @property
    def l_pilots(self) -> int:
        return self.x.cols

    @classmethod
    def random(cls, m: int, l_pilots: int, power: float, rng: np.random.Generator) -> "PilotMatrix":
        """
        I.i.d. complex Gaussian pilot with standard deviation sqrt(P/M) per entry, then projected.
        """
        values = complex_gaussian(rng, (m, l_pilots), variance=power / m)
        return cls(CMatrix.from_complex(values), power).project()

    def project(self) -> "PilotMatrix":
        """Rescale every column to squared norm P"""
        return PilotMatrix(CMatrix.from_complex(project_columns(self.x.to_complex(), self.power)), self.power)

    def column_power(self) -> np.ndarray:
        return np.sum(self.x.re**2 + self.x.im**2, axis=0)


@dataclass(frozen=True)
class ReceivedPilots:
    """One user's L pilot observations and their [Re; Im] stacking"""

    y_complex: CMatrix
    y_real: np.ndarray

    @classmethod
    def from_complex(cls, y: np.ndarray) -> "ReceivedPilots":
        row = CMatrix.from_complex(np.asarray(y, dtype=np.complex128).reshape(1, -1))
        return cls(row, row.stacked())


def project_columns(x: np.ndarray, power: float) -> np.ndarray:
    """Scale each column of a complex matrix to squared norm ``power``"""
    norms = np.sqrt(np.sum(np.abs(x) ** 2, axis=0))
    norms = np.where(norms > 0.0, norms, 1.0)
    return x * (np.sqrt(power) / norms)


def steering_matrix(thetas: np.ndarray, cfg: ArrayConfig) -> np.ndarray:
    """
    Array responses for a set of angles.

    Args:
        thetas: Angles in radians, any shape
        cfg: Array configuration

    Returns:
        Complex array of shape thetas.shape + (M,)
    """
    thetas = np.asarray(thetas, dtype=np.float64)
    phase = 2.0 * np.pi * cfg.spacing_over_lambda * np.sin(thetas)[..., None] * np.arange(cfg.m)
    return np.exp(1j * phase)


def array_response(theta: float, cfg: ArrayConfig) -> CMatrix:
    """Transmit array response a_t(theta) as an M x 1 column"""
    return CMatrix.from_complex(steering_matrix(np.asarray(theta), cfg).reshape(-1, 1))


def channel_from_paths(gains: np.ndarray, aods: np.ndarray, cfg: ArrayConfig, lp: Optional[int] = None) -> np.ndarray:
    """
    Sum of path contributions (1/sqrt(lp)) * sum_l alpha_l a_t(theta_l).

    ``gains``/``aods`` may carry leading batch dimensions; zero gains contribute nothing, so
    padded path slots are harmless when ``lp`` is given explicitly.
    """
    gains = np.asarray(gains, dtype=np.complex128)
    count = gains.shape[-1] if lp is None else lp
    if count == 0:
        return np.zeros(gains.shape[:-1] + (cfg.m,), dtype=np.complex128)
    responses = steering_matrix(aods, cfg)
    return np.sum(gains[..., None] * responses, axis=-2) / np.sqrt(count)


def sample_channel(
    dist: ChannelDistribution,
    cfg: ArrayConfig,
    rng: np.random.Generator,
    lp: Optional[int] = None,
) -> ChannelRealization:
    """
    Draw one user channel.

    Args:
        dist: Channel prior
        cfg: Array configuration
        rng: Generator reserved for channels
        lp: Force a path count (otherwise drawn from the distribution's admissible set)

    Returns:
        ChannelRealization with CN(0, gain_variance) gains and uniform AoDs
    """
    if lp is None:
        choices = dist.admissible_lp
        lp = choices[0] if len(choices) == 1 else int(rng.choice(choices))
    gains = complex_gaussian(rng, (lp,), dist.gain_variance)
    aods = rng.uniform(dist.aod_low, dist.aod_high, size=lp)
    h = channel_from_paths(gains, aods, cfg)
    return ChannelRealization(gains=gains, aods=aods, h=CMatrix.from_complex(h))


def generate_batch(
    dist: ChannelDistribution,
    cfg: ArrayConfig,
    k_users: int,
    n: int,
    rng: np.random.Generator,
) -> ChannelBatch:
    """
    Draw ``n`` independent K-user channel matrices.

    Draw order is fixed (path counts, gains, angles) so a leaf stream always maps to the
    same batch.

    Returns:
        ChannelBatch with ``h`` of shape (n, K, M)
    """
    if n < 1:
        raise ValueError(f"Batch size must be at least 1, got {n}")
    choices = np.asarray(dist.admissible_lp)
    max_lp = int(choices.max())
    if choices.size == 1:
        lp = np.full((n, k_users), max_lp, dtype=np.int64)
    else:
        lp = rng.choice(choices, size=(n, k_users)).astype(np.int64)

    gains = complex_gaussian(rng, (n, k_users, max_lp), dist.gain_variance)
    aods = rng.uniform(dist.aod_low, dist.aod_high, size=(n, k_users, max_lp))
    active = np.arange(max_lp) < lp[..., None]
    gains = np.where(active, gains, 0.0)
    aods = np.where(active, aods, 0.0)

    responses = steering_matrix(aods, cfg)
    h = np.sum(gains[..., None] * responses, axis=-2) / np.sqrt(lp)[..., None]
    return ChannelBatch(h=h, gains=gains, aods=aods, lp=lp)


def receive_pilots(
    h: ChannelRealization,
    pilots: PilotMatrix,
    sigma2: float,
    rng: np.random.Generator,
) -> ReceivedPilots:
    """
    Downlink pilot observation y = h^H X + z with z ~ CN(0, sigma2 I).

    Raises:
        ShapeError: If the pilot row count differs from the channel length
    """
    if sigma2 < 0:
        raise ValueError(f"Noise variance must be non-negative, got {sigma2}")
    vector = h.h.to_complex().ravel()
    x = pilots.x.to_complex()
    if x.shape[0] != vector.shape[0]:
        raise ShapeError(
            f"Pilot has {x.shape[0]} rows but channel has {vector.shape[0]} entries",
            details={"pilot_rows": x.shape[0], "channel_length": vector.shape[0]},
        )
    noise = complex_gaussian(rng, (x.shape[1],), sigma2)
    return ReceivedPilots.from_complex(vector.conj() @ x + noise)


def receive_pilots_batch(h: np.ndarray, pilots: Any, noise: np.ndarray) -> np.ndarray:
    """
    Batched pilot observations conj(h) @ X + noise.

    Args:
        h: Complex channels of shape (..., M)
        pilots: PilotMatrix, CMatrix or complex (M, L) array
        noise: Complex noise of shape (..., L)
    """
    x = pilots.x.to_complex() if isinstance(pilots, PilotMatrix) else as_complex(pilots)
    return np.conj(h) @ x + noise


def draw_noise(rng: np.random.Generator, shape: Tuple[int, ...], sigma2: float) -> np.ndarray:
    """Pilot noise CN(0, sigma2) for a batch of observations"""
    return complex_gaussian(rng, shape, sigma2)


def channel_nmse(h_hat: np.ndarray, h: np.ndarray) -> float:
    """Mean of ||h_hat - h||^2 / ||h||^2 over all leading dimensions"""
    error = np.sum(np.abs(h_hat - h) ** 2, axis=-1)
    energy = np.sum(np.abs(h) ** 2, axis=-1)
    return float(np.mean(error / np.maximum(energy, 1e-300)))


def save_dataset(path_stem: str, batch: ChannelBatch, metadata: Dict[str, Any]) -> Tuple[str, str]:
    """
    Dump channel matrices as little-endian float64 planes with a JSON sidecar.

    Args:
        path_stem: Output path without extension
        batch: Channels to write
        metadata: Sidecar fields (L_p, seed, ...); M, K and count are filled in

    Returns:
        Paths of the binary file and the sidecar
    """
    directory = os.path.dirname(path_stem)
    if directory:
        os.makedirs(directory, exist_ok=True)
    blob_path = f"{path_stem}.bin"
    sidecar_path = f"{path_stem}.json"
    planes = np.stack([batch.h.real, batch.h.imag]).astype("<f8")
    with open(blob_path, "wb") as f:
        f.write(planes.tobytes(order="C"))
    sidecar = dict(metadata)
    sidecar.update({"M": batch.m, "K": batch.k_users, "count": batch.n, "dtype": "<f8", "layout": "re,im;n,k,m"})
    with open(sidecar_path, "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
    logger.info(f"Wrote {batch.n} channel draws to {blob_path}")
    return blob_path, sidecar_path


def load_dataset(path_stem: str) -> Tuple[np.ndarray, Dict[str, Any]]:
    """Read a dataset written by ``save_dataset``; returns complex H of shape (n, K, M) and the sidecar"""
    with open(f"{path_stem}.json", "r") as f:
        sidecar = json.load(f)
    shape = (2, sidecar["count"], sidecar["K"], sidecar["M"])
    planes = np.fromfile(f"{path_stem}.bin", dtype="<f8")
    if planes.size != int(np.prod(shape)):
        raise ShapeError(
            f"Dataset blob holds {planes.size} values, sidecar expects {int(np.prod(shape))}",
            details={"path": path_stem},
        )
    planes = planes.reshape(shape)
    return planes[0] + 1j * planes[1], sidecar
