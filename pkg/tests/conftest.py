import logging

import numpy as np
import pytest

from bcl import scenario
from bcl.invariant import InvariantCertificate


@pytest.fixture(autouse=True)
def _quiet_warnings():
    # expected precondition warnings would otherwise flood the captured log
    logging.getLogger("bcl").setLevel(logging.ERROR)
    yield
    logging.getLogger("bcl").setLevel(logging.NOTSET)


@pytest.fixture(scope="session")
def case_a():
    return scenario.load_preset("case-a.cfg")


@pytest.fixture(scope="session")
def case_b():
    return scenario.load_preset("case-b.cfg")


@pytest.fixture(scope="session")
def cert_a():
    return InvariantCertificate.load(scenario.preset_path("case-a.cert.json"))


@pytest.fixture(scope="session")
def cert_b():
    return InvariantCertificate.load(scenario.preset_path("case-b.cert.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
