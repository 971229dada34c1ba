import numpy as np
import pytest

from src.lib.numerics import SeedTree
from src.models.system import ChannelDistribution, DecoderSpec, EncoderSpec, SystemConfig, TrainingSchedule


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale training gates")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def seeds():
    return SeedTree(2024)


@pytest.fixture
def small_system():
    return SystemConfig(m=8, k_users=2, l_pilots=4, b_bits=6, snr_db=10.0)


@pytest.fixture
def distribution():
    return ChannelDistribution(lp=2)


@pytest.fixture
def tiny_encoder():
    return EncoderSpec(hidden=[16, 8])


@pytest.fixture
def tiny_decoder():
    return DecoderSpec(hidden=[16, 16])


@pytest.fixture
def tiny_schedule():
    return TrainingSchedule(
        batch_size=32,
        batches_per_epoch=3,
        patience=2,
        max_epochs=3,
        validation_size=64,
        lr_decay_patience=1,
    )
