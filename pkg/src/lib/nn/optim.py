"""
Adam optimizer with bias correction.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from src.lib.error.handler import ShapeError
from src.lib.nn.layers import Parameter

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Hyperparameters, step count and per-parameter moment accumulators"""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> List[np.ndarray]:
    """
    One bias-corrected Adam update.

    Args:
        params: Current parameter values
        grads: Gradients, shaped like ``params``
        state: Optimizer state, updated in place

    Returns:
        Updated parameter values (new arrays)

    Raises:
        ShapeError: If a gradient or moment does not match its parameter
    """
    if len(params) != len(grads):
        raise ShapeError(f"Got {len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p, dtype=np.float64) for p in params]
        state.v = [np.zeros_like(p, dtype=np.float64) for p in params]
    if len(state.m) != len(params):
        raise ShapeError(f"Optimizer tracks {len(state.m)} parameters, got {len(params)}")

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    updated = []
    for index, (value, grad) in enumerate(zip(params, grads)):
        if grad.shape != value.shape or state.m[index].shape != value.shape:
            raise ShapeError(
                f"Gradient shape {grad.shape} does not match parameter shape {value.shape}",
                details={"index": index},
            )
        m = state.m[index]
        v = state.v[index]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad**2
        m_hat = m / correction1
        v_hat = v / correction2
        updated.append(value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return updated


class Adam:
    """Adam over a list of Parameters; frozen parameters are skipped"""

    def __init__(
        self,
        parameters: Sequence[Parameter],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.parameters = [p for p in parameters if p.trainable]
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        logger.debug(f"Adam tracking {len(self.parameters)} parameter tensors")

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = value

    def zero_grad(self) -> None:
        for param in self.parameters:
            param.zero_grad()

    def step(self) -> None:
        updated = adam_step([p.value for p in self.parameters], [p.grad for p in self.parameters], self.state)
        for param, value in zip(self.parameters, updated):
            param.value[...] = value
