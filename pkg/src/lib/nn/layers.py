"""
Reverse-mode layers on float64 numpy arrays.

Every layer caches what its backward pass needs during ``forward`` and releases it in
``backward``, so each forward pass supports exactly one backward pass. Parameter gradients
accumulate additively, which makes fan-out (shared layers, shared pilots) sum correctly.
"""
import logging
from collections import OrderedDict
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from src.lib.error.handler import DegenerateInputError, ShapeError
from src.lib.numerics import sigmoid

logger = logging.getLogger(__name__)

BATCHNORM_MOMENTUM = 0.99
BATCHNORM_EPSILON = 1e-3


class Parameter:
    """Trainable tensor with its gradient accumulator"""

    def __init__(self, value: np.ndarray, name: str = "", trainable: bool = True):
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.name = name
        self.trainable = trainable

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.value.shape}, trainable={self.trainable})"


class Module:
    """Base class: parameters, buffers, train/infer mode and state dictionaries"""

    def __init__(self):
        self.training = True
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)

    def children(self) -> List["Module"]:
        return []

    def modules(self) -> List["Module"]:
        """This module and all of its descendants, depth first"""
        found: List[Module] = [self]
        for child in self.children():
            found.extend(child.modules())
        return found

    def named_parameters(self) -> "OrderedDict[str, Parameter]":
        return OrderedDict()

    def named_buffers(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict()

    def parameters(self) -> List[Parameter]:
        return list(self.named_parameters().values())

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def freeze(self) -> "Module":
        for param in self.parameters():
            param.trainable = False
        return self

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state = OrderedDict((name, p.value.copy()) for name, p in self.named_parameters().items())
        state.update((name, b.copy()) for name, b in self.named_buffers().items())
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        targets = dict(self.named_parameters())
        buffers = self.named_buffers()
        expected = set(targets) | set(buffers)
        missing = expected - set(state)
        if missing:
            raise ShapeError(f"State is missing tensors: {sorted(missing)}")
        for name in expected:
            value = np.asarray(state[name], dtype=np.float64)
            target = targets[name].value if name in targets else buffers[name]
            if value.shape != target.shape:
                raise ShapeError(
                    f"Tensor '{name}' has shape {value.shape}, expected {target.shape}",
                    details={"tensor": name},
                )
            target[...] = value

    def _remember(self, cache) -> None:
        self._cache = cache

    def _release(self):
        if self._cache is None:
            raise RuntimeError(f"{type(self).__name__}.backward called without a matching forward pass")
        cache, self._cache = self._cache, None
        return cache


def _check_input(x: np.ndarray, width: int, layer: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError(
            f"{layer} expects input of shape (N, {width}), got {x.shape}",
            details={"expected_width": width, "shape": list(x.shape)},
        )
    return x


class Dense(Module):
    """Affine layer y = x W^T + b with W of shape (out, in)"""

    def __init__(self, in_features: int, out_features: int, rng: Optional[np.random.Generator] = None):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        limit = np.sqrt(6.0 / (in_features + out_features))
        rng = rng or np.random.default_rng(0)
        self.w = Parameter(rng.uniform(-limit, limit, size=(out_features, in_features)), name="w")
        self.b = Parameter(np.zeros(out_features), name="b")

    def named_parameters(self):
        return OrderedDict([("w", self.w), ("b", self.b)])

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = _check_input(x, self.in_features, "Dense")
        self._remember(x)
        return x @ self.w.value.T + self.b.value

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x = self._release()
        self.w.grad += grad.T @ x
        self.b.grad += grad.sum(axis=0)
        return grad @ self.w.value


class ReLU(Module):
    """max(x, 0); the subgradient at 0 is 0"""

    def forward(self, x: np.ndarray) -> np.ndarray:
        mask = x > 0
        self._remember(mask)
        return np.where(mask, x, 0.0)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad * self._release()


class Tanh(Module):
    def forward(self, x: np.ndarray) -> np.ndarray:
        y = np.tanh(x)
        self._remember(y)
        return y

    def backward(self, grad: np.ndarray) -> np.ndarray:
        y = self._release()
        return grad * (1.0 - y**2)


class BatchNorm(Module):
    """
    Batch normalisation over the batch axis.

    Train mode normalises with batch statistics and updates the running estimates (unbiased
    variance); infer mode uses the running estimates only.
    """

    def __init__(self, features: int, momentum: float = BATCHNORM_MOMENTUM, epsilon: float = BATCHNORM_EPSILON):
        super().__init__()
        self.features = features
        self.momentum = momentum
        self.epsilon = epsilon
        self.gamma = Parameter(np.ones(features), name="gamma")
        self.beta = Parameter(np.zeros(features), name="beta")
        self.running_mean = np.zeros(features)
        self.running_var = np.ones(features)

    def named_parameters(self):
        return OrderedDict([("gamma", self.gamma), ("beta", self.beta)])

    def named_buffers(self):
        return OrderedDict([("running_mean", self.running_mean), ("running_var", self.running_var)])

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = _check_input(x, self.features, "BatchNorm")
        if self.training:
            batch = x.shape[0]
            if batch < 2:
                raise ShapeError("Batch normalisation in train mode needs at least two samples")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean *= self.momentum
            self.running_mean += (1.0 - self.momentum) * mean
            self.running_var *= self.momentum
            self.running_var += (1.0 - self.momentum) * var * batch / (batch - 1)
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        x_hat = (x - mean) * inv_std
        self._remember((x_hat, inv_std, self.training))
        return self.gamma.value * x_hat + self.beta.value

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x_hat, inv_std, batch_stats = self._release()
        self.gamma.grad += np.sum(grad * x_hat, axis=0)
        self.beta.grad += grad.sum(axis=0)
        scaled = grad * self.gamma.value
        if not batch_stats:
            return scaled * inv_std
        n = grad.shape[0]
        return (inv_std / n) * (n * scaled - scaled.sum(axis=0) - x_hat * np.sum(scaled * x_hat, axis=0))


class SignST(Module):
    """
    Binary layer: forward emits sgn(u) in {-1, +1} with sgn(0) = +1; backward uses the
    derivative of the annealed surrogate 2*sigm(alpha*u) - 1.

    With ``smooth=True`` the forward pass also uses the surrogate, which is what finite-difference
    checks differentiate.
    """

    def __init__(self, alpha: float = 0.5, smooth: bool = False):
        super().__init__()
        if alpha <= 0:
            raise ValueError(f"Annealing factor must be positive, got {alpha}")
        self.alpha = alpha
        self.smooth = smooth

    def set_alpha(self, alpha: float) -> None:
        if alpha <= 0:
            raise ValueError(f"Annealing factor must be positive, got {alpha}")
        self.alpha = alpha

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        self._remember(x)
        if self.smooth:
            return 2.0 * sigmoid(self.alpha * x) - 1.0
        return np.where(x >= 0, 1.0, -1.0)

    def surrogate_slope(self, x: np.ndarray) -> np.ndarray:
        s = sigmoid(self.alpha * np.asarray(x, dtype=np.float64))
        return 2.0 * self.alpha * s * (1.0 - s)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad * self.surrogate_slope(self._release())


class UnitNormScale(Module):
    """Row-wise y = sqrt(P) x / ||x||_2"""

    def __init__(self, power: float):
        super().__init__()
        self.power = power

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        norms = np.linalg.norm(x, axis=-1, keepdims=True)
        if np.any(norms == 0.0):
            raise DegenerateInputError("Cannot normalise an all-zero output row")
        direction = x / norms
        self._remember((direction, norms))
        return np.sqrt(self.power) * direction

    def backward(self, grad: np.ndarray) -> np.ndarray:
        direction, norms = self._release()
        radial = np.sum(grad * direction, axis=-1, keepdims=True)
        return np.sqrt(self.power) * (grad - direction * radial) / norms


class Sequential(Module):
    """
    Ordered stack of layers; the record of their forward caches is the tape that ``backward``
    replays in reverse.
    """

    def __init__(self, layers: Sequence[Module]):
        super().__init__()
        self.layers = list(layers)

    def children(self) -> List[Module]:
        return list(self.layers)

    def _prefix(self, index: int, layer: Module) -> str:
        return f"{index}.{type(layer).__name__.lower()}"

    def named_parameters(self):
        named = OrderedDict()
        for index, layer in enumerate(self.layers):
            for name, param in layer.named_parameters().items():
                named[f"{self._prefix(index, layer)}.{name}"] = param
        return named

    def named_buffers(self):
        named = OrderedDict()
        for index, layer in enumerate(self.layers):
            for name, buffer in layer.named_buffers().items():
                named[f"{self._prefix(index, layer)}.{name}"] = buffer
        return named

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def find(self, kind: type) -> Iterable[Module]:
        return [layer for layer in self.layers if isinstance(layer, kind)]


def mlp(
    in_features: int,
    hidden: Sequence[int],
    out_features: int,
    rng: np.random.Generator,
    batchnorm_output: bool = True,
) -> List[Module]:
    """
    Fully connected stack where every dense layer is preceded by batch normalisation and hidden
    layers use ReLU. The output dense layer is returned without an activation.
    """
    layers: List[Module] = []
    width = in_features
    for size in hidden:
        layers.extend([BatchNorm(width), Dense(width, size, rng), ReLU()])
        width = size
    if batchnorm_output:
        layers.append(BatchNorm(width))
    layers.append(Dense(width, out_features, rng))
    return layers
