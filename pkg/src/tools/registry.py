"""
Method registry for experiment sweeps.
"""
import logging
from typing import Callable, Dict, List, Optional

from src.lib.error.handler import SimulationError
from src.tools.base import Method
from src.tools.baselines import CsirQuantizedMethod, CsitMethod, DnnMseMethod, OmpMethod
from src.tools.learned import ProposedMethod, TwoStepBMethod, TwoStepKMethod

logger = logging.getLogger(__name__)


class MethodRegistryError(SimulationError):
    """Exception raised for method registry errors"""

    pass


class MethodRegistry:
    """Registry of evaluable methods"""

    def __init__(self):
        """Initialize the method registry"""
        self._methods: Dict[str, Method] = {}
        self._factories: Dict[str, Callable[[], Method]] = {
            "proposed": ProposedMethod,
            "proposed-two-step-B": TwoStepBMethod,
            "proposed-two-step-K": TwoStepKMethod,
        }
        for precoder in ("mrt", "zf"):
            self._factories[f"{precoder}-csit"] = lambda p=precoder: CsitMethod(p)
            self._factories[f"{precoder}-csir-quantized"] = lambda p=precoder: CsirQuantizedMethod(p)
            self._factories[f"{precoder}-omp-infinite"] = lambda p=precoder: OmpMethod(p, quantized=False)
            self._factories[f"{precoder}-omp-quantized"] = lambda p=precoder: OmpMethod(p, quantized=True)
            self._factories[f"{precoder}-dnn-mse"] = lambda p=precoder: DnnMseMethod(p)
        logger.debug(f"Method registry initialized with {len(self._factories)} method types")

    def register_method(self, name: str, method: Method) -> None:
        """
        Register a method instance with the registry.

        Raises:
            MethodRegistryError: If a method with the same name already exists
        """
        if name in self._methods:
            raise MethodRegistryError(f"Method '{name}' already registered")
        self._methods[name] = method
        logger.debug(f"Method '{name}' registered")

    def create_method(self, name: str) -> Method:
        """
        Create (or return the registered) method instance.

        Raises:
            MethodRegistryError: If the method type is not found
        """
        if name in self._methods:
            return self._methods[name]
        if name not in self._factories:
            raise MethodRegistryError(f"Method type '{name}' not found", details={"available": self.get_available_method_types()})
        method = self._factories[name]()
        self._methods[name] = method
        return method

    def get_method(self, name: str) -> Optional[Method]:
        return self._methods.get(name)

    def get_registered_methods(self) -> List[str]:
        return list(self._methods.keys())

    def get_available_method_types(self) -> List[str]:
        return list(self._factories.keys())
