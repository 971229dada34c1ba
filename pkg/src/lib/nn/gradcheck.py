"""
Central finite-difference gradient checks.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional

import numpy as np

from src.lib.nn.layers import Module, SignST

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
SCALE_FLOOR = 1e-3


@dataclass
class GradCheckReport:
    """Largest relative error between analytic and numerical gradients"""

    max_rel_error: float = 0.0
    worst_tensor: str = ""
    checked: int = 0
    per_tensor: Dict[str, float] = field(default_factory=dict)

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def grad_check(
    loss_fn: Callable[[], float],
    tensors: Mapping[str, np.ndarray],
    analytic: Mapping[str, np.ndarray],
    step: float = DEFAULT_STEP,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """
    Compare analytic gradients against central differences.

    ``loss_fn`` is re-evaluated after perturbing entries of ``tensors`` in place. The error of
    an entry is |a - n| / max(|a|, |n|, 1e-3 * max(1, max|a| over the tensor)), so entries whose
    gradient is tiny relative to the rest of the tensor do not dominate through round-off.

    Args:
        loss_fn: Scalar loss of the current tensor values
        tensors: Named arrays to perturb (modified and restored in place)
        analytic: Analytic gradients, same names and shapes
        step: Finite-difference step
        max_entries: Check at most this many random entries per tensor
        rng: Generator for entry sampling

    Returns:
        GradCheckReport
    """
    rng = rng or np.random.default_rng(0)
    report = GradCheckReport()
    for name, tensor in tensors.items():
        grad = np.asarray(analytic[name], dtype=np.float64)
        flat = tensor.reshape(-1)
        if not np.shares_memory(flat, tensor):
            raise ValueError(f"Tensor '{name}' must be contiguous to be perturbed in place")
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = rng.choice(flat.size, size=max_entries, replace=False)
        floor = SCALE_FLOOR * max(1.0, float(np.max(np.abs(grad))) if grad.size else 1.0)
        worst = 0.0
        for index in indices:
            original = flat[index]
            flat[index] = original + step
            plus = loss_fn()
            flat[index] = original - step
            minus = loss_fn()
            flat[index] = original
            numerical = (plus - minus) / (2.0 * step)
            exact = grad.reshape(-1)[index]
            error = abs(exact - numerical) / max(abs(exact), abs(numerical), floor)
            worst = max(worst, error)
        report.per_tensor[name] = worst
        report.checked += len(indices)
        if worst >= report.max_rel_error:
            report.max_rel_error = worst
            report.worst_tensor = name
    logger.debug(f"Gradient check: max relative error {report.max_rel_error:.3e} in '{report.worst_tensor}'")
    return report


def check_module(
    module: Module,
    x: np.ndarray,
    rng: np.random.Generator,
    step: float = DEFAULT_STEP,
    max_entries: Optional[int] = None,
) -> GradCheckReport:
    """
    Gradient check of a module against the loss sum(module(x) * w) for a random w.

    Sign layers inside the module are switched to their smooth surrogate for the check.
    """
    signs = [layer for layer in module.modules() if isinstance(layer, SignST)]
    previous = [layer.smooth for layer in signs]
    for layer in signs:
        layer.smooth = True
    try:
        x = np.array(x, dtype=np.float64)
        weights = rng.standard_normal(module.forward(x).shape)
        module.zero_grad()
        module.forward(x)
        dx = module.backward(weights)

        params = module.named_parameters()
        tensors = {name: p.value for name, p in params.items()}
        analytic = {name: p.grad.copy() for name, p in params.items()}
        tensors["input"] = x
        analytic["input"] = dx

        def loss() -> float:
            return float(np.sum(module.forward(x) * weights))

        return grad_check(loss, tensors, analytic, step=step, max_entries=max_entries, rng=rng)
    finally:
        for layer, smooth in zip(signs, previous):
            layer.smooth = smooth
