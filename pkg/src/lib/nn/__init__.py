from src.lib.nn.checkpoint import config_hash, load_checkpoint, save_checkpoint
from src.lib.nn.gradcheck import GradCheckReport, check_module, grad_check
from src.lib.nn.layers import (
    BatchNorm,
    Dense,
    Module,
    Parameter,
    ReLU,
    Sequential,
    SignST,
    Tanh,
    UnitNormScale,
    mlp,
)
from src.lib.nn.optim import Adam, AdamState, adam_step

__all__ = [
    "Adam",
    "AdamState",
    "BatchNorm",
    "Dense",
    "GradCheckReport",
    "Module",
    "Parameter",
    "ReLU",
    "Sequential",
    "SignST",
    "Tanh",
    "UnitNormScale",
    "adam_step",
    "check_module",
    "config_hash",
    "grad_check",
    "load_checkpoint",
    "mlp",
    "save_checkpoint",
]
