import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fdran.sim.config import PRESETS, NetworkConfig, SimConfig, from_dict
from fdran.sim.engine import build_network_map

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def tiny_net():
    return from_dict(NetworkConfig, PRESETS["tiny"]["network"])


@pytest.fixture(scope="session")
def tiny_cfg():
    return from_dict(SimConfig, PRESETS["tiny"]["sim"])


@pytest.fixture(scope="session")
def tiny_map(tiny_net, tiny_cfg):
    return build_network_map(tiny_net, tiny_cfg.K)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
