from src.lib.error.handler import (
    AllocationError,
    CheckpointError,
    ConfigValidationError,
    DegenerateInputError,
    DivergenceError,
    ErrorHandler,
    QuantizerError,
    ShapeError,
    SimulationError,
    SingularityError,
)

__all__ = [
    "AllocationError",
    "CheckpointError",
    "ConfigValidationError",
    "DegenerateInputError",
    "DivergenceError",
    "ErrorHandler",
    "QuantizerError",
    "ShapeError",
    "SimulationError",
    "SingularityError",
]
