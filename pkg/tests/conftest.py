import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mcp_mimo import BPSK, QPSK, Constellation, Integrator, enumerate_joint

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

SQRT3 = math.sqrt(3.0)
H_SKEW = np.diag([SQRT3, 1.0])
P_STAR = np.array([[1.0, 1.0], [-1.0, 1.0]]) / math.sqrt(2.0)
P_TPC = np.diag([1.0 / math.sqrt(2.0), math.sqrt(1.5)])
P_UTPC = np.eye(2)


@pytest.fixture
def bpsk2():
    return enumerate_joint([BPSK, BPSK])


@pytest.fixture
def qpsk2():
    return enumerate_joint([QPSK, QPSK])


@pytest.fixture
def nqpsk2():
    q = Constellation.qpsk(normalize_energy=True)
    return enumerate_joint([q, q])


@pytest.fixture
def quad():
    return Integrator.quadrature(48)


def random_channel(rng, n=2, m=None):
    m = n if m is None else m
    return (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / math.sqrt(2.0)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
