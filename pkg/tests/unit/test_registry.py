import pytest

from src.models.experiment import METHODS
from src.tools.base import Method
from src.tools.baselines import CsitMethod, OmpMethod
from src.tools.registry import MethodRegistry, MethodRegistryError


def test_every_configurable_method_is_registered():
    registry = MethodRegistry()
    assert sorted(registry.get_available_method_types()) == sorted(METHODS)
    for name in METHODS:
        method = registry.create_method(name)
        assert isinstance(method, Method)
        assert method.name == name
        assert method.description


def test_methods_are_cached_per_registry():
    registry = MethodRegistry()
    first = registry.create_method("zf-csit")
    assert registry.create_method("zf-csit") is first
    assert registry.get_method("zf-csit") is first
    assert registry.get_registered_methods() == ["zf-csit"]
    assert registry.get_method("mrt-csit") is None


def test_precoder_binding_is_per_name():
    registry = MethodRegistry()
    assert registry.create_method("mrt-csit").precoder == "mrt"
    assert registry.create_method("zf-omp-quantized").precoder == "zf"
    assert registry.create_method("zf-omp-quantized").quantized
    assert not registry.create_method("mrt-omp-infinite").quantized


def test_training_flags():
    registry = MethodRegistry()
    trained = {name for name in METHODS if registry.create_method(name).trains}
    assert trained == {"proposed", "proposed-two-step-B", "proposed-two-step-K", "mrt-dnn-mse", "zf-dnn-mse"}


def test_unknown_method():
    with pytest.raises(MethodRegistryError) as info:
        MethodRegistry().create_method("mmse-csit")
    assert "zf-csit" in info.value.details["available"]


def test_register_custom_method():
    registry = MethodRegistry()
    custom = OmpMethod("zf", quantized=False)
    registry.register_method("omp-reference", custom)
    assert registry.create_method("omp-reference") is custom
    with pytest.raises(MethodRegistryError):
        registry.register_method("omp-reference", CsitMethod("zf"))
