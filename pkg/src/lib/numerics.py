"""
Complex linear algebra on separate real/imaginary planes, seeded random streams
and small kernels shared by the channel, precoding and network code.
"""
import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import scipy.linalg

from src.lib.error.handler import DegenerateInputError, ShapeError, SingularityError

logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12

PURPOSES: Tuple[str, ...] = ("channels", "noise", "init", "validation", "test")


@dataclass(frozen=True)
class CMatrix:
    """
    Complex matrix stored as two row-major float64 planes.

    The [Re; Im] view returned by ``stacked`` is what the network layers consume.
    """

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        re = np.ascontiguousarray(self.re, dtype=np.float64)
        im = np.ascontiguousarray(self.im, dtype=np.float64)
        if re.ndim != 2 or im.shape != re.shape:
            raise ShapeError(
                f"Real and imaginary planes must be equal 2-D arrays, got {re.shape} and {im.shape}",
                details={"re_shape": list(re.shape), "im_shape": list(im.shape)},
            )
        if not (np.all(np.isfinite(re)) and np.all(np.isfinite(im))):
            raise DegenerateInputError(
                "CMatrix entries must be finite",
                details={"non_finite": int(np.sum(~np.isfinite(re)) + np.sum(~np.isfinite(im)))},
            )
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def from_complex(cls, values: np.ndarray) -> "CMatrix":
        """Build from a complex array; 1-D input becomes a column"""
        arr = np.asarray(values, dtype=np.complex128)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        return cls(arr.real.copy(), arr.imag.copy())

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "CMatrix":
        return cls(np.zeros((rows, cols)), np.zeros((rows, cols)))

    @classmethod
    def identity(cls, n: int) -> "CMatrix":
        return cls(np.eye(n), np.zeros((n, n)))

    @property
    def rows(self) -> int:
        return self.re.shape[0]

    @property
    def cols(self) -> int:
        return self.re.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.re.shape

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    def conj_transpose(self) -> "CMatrix":
        return CMatrix(self.re.T.copy(), -self.im.T)

    def stacked(self) -> np.ndarray:
        """Real representation: real plane on top of the imaginary plane, flattened"""
        return np.concatenate([self.re.ravel(), self.im.ravel()])

    def frobenius_norm(self) -> float:
        return float(np.sqrt(np.sum(self.re**2) + np.sum(self.im**2)))

    def scale(self, factor: float) -> "CMatrix":
        return CMatrix(self.re * factor, self.im * factor)


ComplexLike = Union[CMatrix, np.ndarray]


def as_complex(value: ComplexLike) -> np.ndarray:
    """Complex ndarray view of a CMatrix or an array-like"""
    if isinstance(value, CMatrix):
        return value.to_complex()
    return np.asarray(value, dtype=np.complex128)


def cgemm(a: CMatrix, b: CMatrix, conj_transpose_a: bool = False) -> CMatrix:
    """
    Complex matrix product on real/imaginary planes.

    Args:
        a: Left operand
        b: Right operand
        conj_transpose_a: Apply the Hermitian transpose to ``a`` first

    Returns:
        a @ b (or a^H @ b)

    Raises:
        ShapeError: If the inner dimensions do not agree
    """
    a_re, a_im = (a.re.T, -a.im.T) if conj_transpose_a else (a.re, a.im)
    if a_re.shape[1] != b.rows:
        raise ShapeError(
            f"Inner dimensions do not agree: {a_re.shape} x {b.shape}",
            details={"left": list(a_re.shape), "right": list(b.shape)},
        )
    re = a_re @ b.re - a_im @ b.im
    im = a_re @ b.im + a_im @ b.re
    return CMatrix(re, im)


def solve_hermitian(a: CMatrix, b: CMatrix) -> CMatrix:
    """
    Solve a @ x = b for a Hermitian positive definite ``a`` via Cholesky.

    Args:
        a: Square Hermitian positive definite matrix (a K x K Gram matrix)
        b: Right-hand side

    Returns:
        Solution x

    Raises:
        ShapeError: If ``a`` is not square or does not match ``b``
        SingularityError: If the condition number exceeds 1e12
    """
    if a.rows != a.cols or a.rows != b.rows:
        raise ShapeError(
            f"Cannot solve {a.shape} system with right-hand side {b.shape}",
            details={"a": list(a.shape), "b": list(b.shape)},
        )
    matrix = a.to_complex()
    matrix = 0.5 * (matrix + matrix.conj().T)
    eigenvalues = np.linalg.eigvalsh(matrix)
    largest = float(eigenvalues[-1])
    smallest = float(eigenvalues[0])
    if largest <= 0.0 or smallest <= largest / CONDITION_LIMIT:
        raise SingularityError(
            "Hermitian system is singular or ill-conditioned",
            details={"smallest_eigenvalue": smallest, "largest_eigenvalue": largest},
        )
    factor = scipy.linalg.cho_factor(matrix, lower=True)
    solution = scipy.linalg.cho_solve(factor, b.to_complex())
    return CMatrix.from_complex(solution)


class SeedTree:
    """
    Deterministic random streams keyed by (root seed, purpose, index).

    Streams for different purposes are statistically independent, so drawing more
    noise never shifts the channel stream.
    """

    def __init__(self, root_seed: int):
        if root_seed < 0 or root_seed >= 2**64:
            raise ValueError(f"Root seed must be an unsigned 64-bit integer, got {root_seed}")
        self.root_seed = int(root_seed)

    def stream(self, purpose: str, index: int = 0) -> np.random.Generator:
        """
        Get the generator for one leaf of the tree.

        Args:
            purpose: One of ``PURPOSES``
            index: Leaf index within the purpose

        Returns:
            Fresh numpy Generator positioned at the start of the leaf
        """
        if purpose not in PURPOSES:
            raise ValueError(f"Unknown stream purpose '{purpose}', expected one of {PURPOSES}")
        sequence = np.random.SeedSequence(
            entropy=self.root_seed, spawn_key=(PURPOSES.index(purpose), int(index))
        )
        return np.random.Generator(np.random.PCG64(sequence))

    def child(self, index: int) -> "SeedTree":
        """Derive an independent sub-tree, used for per-grid-point seeding"""
        sequence = np.random.SeedSequence(entropy=self.root_seed, spawn_key=(len(PURPOSES), int(index)))
        return SeedTree(int(sequence.generate_state(1, dtype=np.uint64)[0]))

    def __repr__(self) -> str:
        return f"SeedTree(root_seed={self.root_seed})"


def gaussian_stream(rng: np.random.Generator, n: int, variance: float) -> np.ndarray:
    """
    Draw ``n`` i.i.d. N(0, variance) samples from a seed-tree leaf.

    Raises:
        ValueError: If variance is not positive
    """
    if variance <= 0:
        raise ValueError(f"Variance must be positive, got {variance}")
    return rng.normal(0.0, np.sqrt(variance), size=int(n))


def complex_gaussian(rng: np.random.Generator, shape: Tuple[int, ...], variance: float) -> np.ndarray:
    """CN(0, variance) samples: variance/2 on each real component"""
    if variance < 0:
        raise ValueError(f"Variance must be non-negative, got {variance}")
    std = np.sqrt(variance / 2.0)
    real = rng.standard_normal(size=shape)
    imag = rng.standard_normal(size=shape)
    return std * (real + 1j * imag)


def db_to_linear(value_db: float) -> float:
    return float(10.0 ** (value_db / 10.0))


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Overflow-free logistic function"""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    exp_x = np.exp(x[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out
