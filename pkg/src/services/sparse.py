"""
Orthogonal matching pursuit over an angular dictionary for downlink channel estimation.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from src.lib.error.handler import ShapeError
from src.lib.numerics import CMatrix, as_complex
from src.models.system import ArrayConfig
from src.services.channel import PilotMatrix, ReceivedPilots, steering_matrix

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 1024
DEFAULT_ANGLE_RANGE_DEG = (-90.0, 90.0)


@dataclass(frozen=True)
class AngularDictionary:
    """Candidate angles and their array responses (one atom per column)"""

    grid: np.ndarray
    atoms: CMatrix

    @property
    def size(self) -> int:
        return int(self.grid.size)

    def project(self, pilots: PilotMatrix) -> np.ndarray:
        """Pilot-projected atoms X^H a_t(theta_g), shape (L, G)"""
        return pilots.x.to_complex().conj().T @ self.atoms.to_complex()


@dataclass
class OmpResult:
    """Selected columns, their least-squares coefficients and the residual norm after each step"""

    support: List[int]
    coefficients: np.ndarray
    residual_norms: List[float] = field(default_factory=list)


def build_dictionary(
    cfg: ArrayConfig,
    grid_size: int = DEFAULT_GRID_SIZE,
    angle_range: Tuple[float, float] = DEFAULT_ANGLE_RANGE_DEG,
) -> AngularDictionary:
    """
    Uniform grid in sin(theta) over an angle range given in degrees.
    """
    if grid_size < 2:
        raise ValueError(f"Grid needs at least two points, got {grid_size}")
    low, high = (math.radians(a) for a in angle_range)
    grid = np.arcsin(np.linspace(np.sin(low), np.sin(high), grid_size))
    atoms = steering_matrix(grid, cfg).T
    return AngularDictionary(grid=grid, atoms=CMatrix.from_complex(atoms))


def omp(y: np.ndarray, sensing: np.ndarray, sparsity: int) -> OmpResult:
    """
    Orthogonal matching pursuit with a fixed number of iterations.

    Each iteration picks the unselected column with the largest normalised correlation with
    the residual (ties go to the lowest index), then refits all selected coefficients by
    least squares.

    Args:
        y: Observation vector of length L
        sensing: L x G sensing matrix
        sparsity: Number of iterations / atoms

    Returns:
        OmpResult; an all-zero observation returns an empty support

    Raises:
        ShapeError: If the sparsity exceeds the rows or columns of ``sensing``
    """
    y = as_complex(y).ravel()
    sensing = as_complex(sensing)
    rows, cols = sensing.shape
    if y.size != rows:
        raise ShapeError(f"Observation length {y.size} does not match sensing rows {rows}")
    if sparsity > min(rows, cols):
        raise ShapeError(
            f"Sparsity {sparsity} exceeds the sensing matrix dimensions {sensing.shape}",
            details={"sparsity": sparsity, "rows": rows, "cols": cols},
        )
    if sparsity <= 0 or not np.any(y):
        return OmpResult(support=[], coefficients=np.zeros(0, dtype=np.complex128))

    norms = np.linalg.norm(sensing, axis=0)
    scale = np.where(norms > 0.0, 1.0 / np.where(norms > 0.0, norms, 1.0), 0.0)
    residual = y.copy()
    support: List[int] = []
    coefficients = np.zeros(0, dtype=np.complex128)
    residual_norms = [float(np.linalg.norm(residual))]
    for iteration in range(sparsity):
        correlation = np.abs(sensing.conj().T @ residual) * scale
        correlation[support] = -1.0
        support.append(int(np.argmax(correlation)))
        selected = sensing[:, support]
        coefficients, *_ = np.linalg.lstsq(selected, y, rcond=None)
        residual = y - selected @ coefficients
        residual_norms.append(float(np.linalg.norm(residual)))
        logger.debug(f"OMP iteration {iteration + 1}: atom {support[-1]}, residual {residual_norms[-1]:.3e}")
    return OmpResult(support=support, coefficients=coefficients, residual_norms=residual_norms)


def _recover(y: np.ndarray, projected_atoms: np.ndarray, lp: int) -> OmpResult:
    """OMP on y^H (= X^H h + noise) against the pilot-projected atoms"""
    return omp(np.conj(as_complex(y).ravel()), projected_atoms, lp)


def estimate_paths_omp(
    y: np.ndarray,
    projected_atoms: np.ndarray,
    dictionary: AngularDictionary,
    lp: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Path gains and angles recovered from one observation.

    Gains are the OMP coefficients scaled by sqrt(lp), so the multipath model with these
    (gain, angle) pairs reproduces the OMP channel estimate. Missing paths are zero.
    """
    gains = np.zeros(max(lp, 0), dtype=np.complex128)
    angles = np.zeros(max(lp, 0))
    if lp <= 0:
        return gains, angles
    result = _recover(y, projected_atoms, lp)
    count = len(result.support)
    gains[:count] = np.sqrt(lp) * result.coefficients
    angles[:count] = dictionary.grid[result.support]
    return gains, angles


def estimate_channel_omp(
    rx: ReceivedPilots,
    pilots: PilotMatrix,
    dictionary: AngularDictionary,
    lp: int,
    projected_atoms: Optional[np.ndarray] = None,
) -> CMatrix:
    """
    Channel estimate (1/sqrt(lp)) sum_g alpha_g a_t(theta_g) over the OMP support.

    Args:
        rx: Received pilots of one user
        pilots: Pilot matrix that produced them
        dictionary: Angular dictionary
        lp: Number of paths to recover
        projected_atoms: Cached ``dictionary.project(pilots)``
    """
    m = dictionary.atoms.rows
    if lp <= 0:
        return CMatrix.zeros(m, 1)
    if pilots.m != m:
        raise ShapeError(f"Pilot rows {pilots.m} do not match dictionary atoms of length {m}")
    if projected_atoms is None:
        projected_atoms = dictionary.project(pilots)
    result = _recover(rx.y_complex.to_complex(), projected_atoms, lp)
    if not result.support:
        return CMatrix.zeros(m, 1)
    h_hat = dictionary.atoms.to_complex()[:, result.support] @ result.coefficients
    return CMatrix.from_complex(h_hat.reshape(-1, 1))


def estimate_channels_omp(
    y: np.ndarray,
    pilots: PilotMatrix,
    dictionary: AngularDictionary,
    lp: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Batched OMP estimation.

    Args:
        y: Received pilots of shape (..., L)
        pilots: Pilot matrix
        dictionary: Angular dictionary
        lp: Number of paths to recover

    Returns:
        (channel estimates (..., M), gains (..., lp), angles (..., lp))
    """
    y = as_complex(y)
    lead = y.shape[:-1]
    flat = y.reshape(-1, y.shape[-1])
    width = max(lp, 0)
    projected = dictionary.project(pilots)
    atoms = dictionary.atoms.to_complex()
    channels = np.zeros((flat.shape[0], atoms.shape[0]), dtype=np.complex128)
    gains = np.zeros((flat.shape[0], width), dtype=np.complex128)
    angles = np.zeros((flat.shape[0], width))
    if width:
        for row, observation in enumerate(flat):
            result = _recover(observation, projected, lp)
            count = len(result.support)
            if not count:
                continue
            channels[row] = atoms[:, result.support] @ result.coefficients
            gains[row, :count] = np.sqrt(lp) * result.coefficients
            angles[row, :count] = dictionary.grid[result.support]
    logger.debug(f"OMP estimated {flat.shape[0]} channels with L_p={lp}")
    return (
        channels.reshape(lead + (atoms.shape[0],)),
        gains.reshape(lead + (width,)),
        angles.reshape(lead + (width,)),
    )
