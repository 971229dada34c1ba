"""
Exception hierarchy and error rendering for the precoding simulator.
"""
import logging
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)


class SimulationError(Exception):
    """Base exception for every failure raised by the simulator"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class ShapeError(SimulationError):
    """Exception raised when operand dimensions do not agree"""

    pass


class SingularityError(SimulationError):
    """Exception raised for ill-conditioned or rank-deficient linear systems"""

    pass


class DegenerateInputError(SimulationError):
    """Exception raised when an input carries no usable information (zero norm, too few samples)"""

    pass


class AllocationError(SimulationError):
    """Exception raised when a feedback budget cannot be split across channel parameters"""

    pass


class QuantizerError(SimulationError):
    """Exception raised for invalid quantizer indices or codebooks"""

    pass


class DivergenceError(SimulationError):
    """Exception raised when a training loss becomes non-finite"""

    pass


class CheckpointError(SimulationError):
    """Exception raised for missing, corrupt or mismatched checkpoints"""

    pass


class ConfigValidationError(SimulationError):
    """Exception raised when a configuration fails validation"""

    def __init__(self, message: str, errors: Optional[List[Dict[str, str]]] = None):
        super().__init__(message, details={"errors": errors or []})
        self.errors = errors or []

    @classmethod
    def from_pydantic(cls, exc: Any, prefix: str = "") -> "ConfigValidationError":
        """
        Build from a pydantic ValidationError, keeping one entry per offending field.

        Args:
            exc: pydantic.ValidationError instance
            prefix: Optional dotted prefix prepended to every field path

        Returns:
            ConfigValidationError listing the offending fields
        """
        errors = []
        for err in exc.errors():
            path = ".".join(str(part) for part in err.get("loc", ()))
            if prefix:
                path = f"{prefix}.{path}" if path else prefix
            errors.append({"field": path or "(root)", "message": err.get("msg", "invalid value")})
        fields = ", ".join(e["field"] for e in errors)
        return cls(f"Invalid configuration: {fields}", errors=errors)


class ErrorHandler:
    """Maps exceptions to machine-readable payloads and process exit codes"""

    EXIT_CODES = {
        ConfigValidationError: 2,
        CheckpointError: 3,
    }
    DEFAULT_SIMULATION_EXIT = 1
    UNEXPECTED_EXIT = 70

    def to_payload(self, exc: BaseException) -> Dict[str, Any]:
        """
        Render an exception as a JSON-ready dictionary.

        Args:
            exc: Exception to render

        Returns:
            Dictionary with error class, message and details
        """
        if isinstance(exc, SimulationError):
            return {
                "error": type(exc).__name__,
                "message": exc.message,
                "details": exc.details,
            }
        return {"error": type(exc).__name__, "message": str(exc), "details": {}}

    def exit_code(self, exc: BaseException) -> int:
        """Exit code for an exception surfaced at the command line"""
        for exc_type, code in self.EXIT_CODES.items():
            if isinstance(exc, exc_type):
                return code
        if isinstance(exc, SimulationError):
            return self.DEFAULT_SIMULATION_EXIT
        return self.UNEXPECTED_EXIT
