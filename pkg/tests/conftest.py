import os

import pytest
from hypothesis import HealthCheck, settings

from thermnet.catalog import NAMES, load_shipped
from thermnet.network import Network

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SIGMA = 5.670374419e-8


@pytest.fixture(scope="session")
def shipped():
    """All shipped models, parsed once."""
    return {name: load_shipped(name) for name in NAMES}


@pytest.fixture(scope="session")
def networks(shipped):
    return {name: Network(m) for name, m in shipped.items()}


@pytest.fixture(scope="session")
def maqro(shipped):
    return shipped["maqro_l2"]


@pytest.fixture(scope="session")
def maqro_net(networks):
    return networks["maqro_l2"]
