"""
Achievable-rate evaluation and full-CSI linear precoders.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.lib.error.handler import DegenerateInputError, ShapeError, SingularityError
from src.lib.numerics import CMatrix, ComplexLike, as_complex, cgemm, solve_hermitian

logger = logging.getLogger(__name__)

POWER_TOLERANCE = 1e-9
RANK_TOLERANCE = 1e-12
LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class PrecodingMatrix:
    """M x K precoder under the total power constraint Tr(V V^H) <= P"""

    v: CMatrix
    power: float

    def __post_init__(self):
        trace = self.v.frobenius_norm() ** 2
        if trace > self.power + POWER_TOLERANCE * max(1.0, self.power):
            raise ValueError(f"Precoder power {trace} exceeds the budget {self.power}")

    @property
    def trace(self) -> float:
        return self.v.frobenius_norm() ** 2

    def to_complex(self) -> np.ndarray:
        return self.v.to_complex()


def _precoder_array(v) -> np.ndarray:
    if isinstance(v, PrecodingMatrix):
        return v.to_complex()
    return as_complex(v)


def _interaction(h_all: ComplexLike, v) -> np.ndarray:
    """A[k, j] = h_k^H v_j for a K x M channel matrix and an M x K precoder"""
    h = as_complex(h_all)
    precoder = _precoder_array(v)
    if h.shape[-1] != precoder.shape[-2]:
        raise ShapeError(
            f"Channel length {h.shape[-1]} does not match precoder rows {precoder.shape[-2]}",
            details={"channel": list(h.shape), "precoder": list(precoder.shape)},
        )
    return np.conj(h) @ precoder


def user_rate(h_all: ComplexLike, v, k: int, sigma2: float) -> float:
    """
    Achievable rate of user k in bits/s/Hz.

    Args:
        h_all: K x M channel matrix (rows are h_k)
        v: PrecodingMatrix or complex M x K array
        k: User index
        sigma2: Noise variance
    """
    gains = np.abs(_interaction(h_all, v)) ** 2
    if not 0 <= k < gains.shape[0]:
        raise IndexError(f"User index {k} out of range for {gains.shape[0]} users")
    signal = gains[k, k]
    interference = np.sum(gains[k]) - signal
    return float(np.log2(1.0 + signal / (interference + sigma2)))


def sum_rate(h_all: ComplexLike, v, sigma2: float) -> float:
    """Sum of the per-user rates"""
    users = as_complex(h_all).shape[0]
    return float(sum(user_rate(h_all, v, k, sigma2) for k in range(users)))


def user_rates_batch(h: np.ndarray, v: np.ndarray, sigma2: float) -> np.ndarray:
    """
    Per-user rates for a batch.

    Args:
        h: Channels of shape (N, K, M)
        v: Precoders of shape (N, M, K)
        sigma2: Noise variance

    Returns:
        Rates of shape (N, K)
    """
    gains = np.abs(_interaction(h, v)) ** 2
    signal = np.diagonal(gains, axis1=-2, axis2=-1)
    interference = np.sum(gains, axis=-1) - signal
    return np.log2(1.0 + signal / (interference + sigma2))


def sum_rate_batch(h: np.ndarray, v: np.ndarray, sigma2: float) -> np.ndarray:
    return np.sum(user_rates_batch(h, v, sigma2), axis=-1)


def sum_rate_gradient(h: np.ndarray, v: np.ndarray, sigma2: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sum rates and their gradient with respect to the precoders.

    With A = conj(H) V, R = sum_k log2(T_k) - log2(I_k), where T_k = sum_j |A_kj|^2 + sigma2 and
    I_k = T_k - |A_kk|^2. The returned gradient is dR/dRe(V) + j dR/dIm(V).

    Returns:
        (rates of shape (N,), gradient of shape (N, M, K))
    """
    a = _interaction(h, v)
    gains = np.abs(a) ** 2
    signal = np.diagonal(gains, axis1=-2, axis2=-1)
    total = np.sum(gains, axis=-1) + sigma2
    interference = total - signal
    rates = np.sum(np.log2(total) - np.log2(interference), axis=-1)

    users = gains.shape[-1]
    weights = (1.0 / total)[..., None] - (1.0 / interference)[..., None] * (1.0 - np.eye(users))
    grad_a = 2.0 * weights * a / LN2
    grad_v = np.swapaxes(h, -1, -2) @ grad_a
    return rates, grad_v


def normalize_total_power(v_raw: ComplexLike, power: float) -> PrecodingMatrix:
    """
    Scale a precoder to Frobenius norm sqrt(P).

    Raises:
        DegenerateInputError: If the input is zero
    """
    raw = as_complex(v_raw)
    norm = float(np.linalg.norm(raw))
    if norm == 0.0:
        raise DegenerateInputError("Cannot normalise an all-zero precoder")
    scaled = raw * (np.sqrt(power) / norm)
    return PrecodingMatrix(CMatrix.from_complex(scaled), power)


def mrt(h_all: ComplexLike, power: float) -> PrecodingMatrix:
    """
    Maximum-ratio transmission V = gamma H^H with Tr(V V^H) = P.

    Raises:
        DegenerateInputError: If H is all zeros
    """
    h = CMatrix.from_complex(as_complex(h_all))
    if h.frobenius_norm() == 0.0:
        raise DegenerateInputError("MRT needs a non-zero channel matrix")
    return normalize_total_power(h.conj_transpose(), power)


def zf(h_all: ComplexLike, power: float) -> PrecodingMatrix:
    """
    Zero-forcing V = gamma H^H (H H^H)^{-1} with Tr(V V^H) = P.

    Raises:
        SingularityError: If H is not full row rank
    """
    h = CMatrix.from_complex(as_complex(h_all))
    gram = cgemm(h, h.conj_transpose())
    eigenvalues = np.linalg.eigvalsh(gram.to_complex())
    if eigenvalues[-1] <= 0.0 or eigenvalues[0] < RANK_TOLERANCE * eigenvalues[-1]:
        raise SingularityError(
            "Channel matrix is rank deficient; zero-forcing is undefined",
            details={"smallest_eigenvalue": float(eigenvalues[0]), "largest_eigenvalue": float(eigenvalues[-1])},
        )
    inverse = solve_hermitian(gram, CMatrix.identity(h.rows))
    return normalize_total_power(cgemm(h, inverse, conj_transpose_a=True), power)


def mrt_batch(h: np.ndarray, power: float) -> np.ndarray:
    """
    MRT precoders for channels of shape (N, K, M); returns (N, M, K).

    An all-zero estimate (e.g. OMP finding no path in a zero observation) gets a zero precoder.
    """
    out = []
    silent = 0
    for sample in h:
        if np.linalg.norm(sample) == 0.0:
            silent += 1
            out.append(np.zeros(sample.T.shape, dtype=np.complex128))
        else:
            out.append(mrt(sample, power).to_complex())
    if silent:
        logger.warning(f"MRT got {silent} of {len(h)} all-zero channel estimates; transmitting nothing for them")
    return np.stack(out)


def zf_batch(h: np.ndarray, power: float) -> np.ndarray:
    """
    ZF precoders for channels of shape (N, K, M); returns (N, M, K).

    Rank-deficient estimates (e.g. two users fed back the same quantized channel) fall back
    to MRT for that draw.
    """
    out = []
    fallbacks = 0
    for sample in h:
        try:
            out.append(zf(sample, power).to_complex())
        except (SingularityError, DegenerateInputError):
            fallbacks += 1
            if np.linalg.norm(sample) == 0.0:
                out.append(np.zeros(sample.T.shape, dtype=np.complex128))
            else:
                out.append(mrt(sample, power).to_complex())
    if fallbacks:
        logger.warning(f"ZF fell back to MRT on {fallbacks} of {len(h)} rank-deficient channel estimates")
    return np.stack(out)


def precode_batch(method: str, h: np.ndarray, power: float) -> np.ndarray:
    """Dispatch to ``mrt_batch`` or ``zf_batch`` by name"""
    if method == "mrt":
        return mrt_batch(h, power)
    if method == "zf":
        return zf_batch(h, power)
    raise ValueError(f"Unknown linear precoder '{method}'")
