import math
import time

import numpy as np
import pytest
from hypothesis import settings

from microgrid_mor.inverter import DroopInverter
from microgrid_mor.perunit import DroopGains, make_base
from microgrid_mor.scenario import load_scenario

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

W0 = 2 * math.pi * 50
TAU = 1 / 31.4
BASE = make_base(381.58, 10e3, 50.0)


def twobus_rx(length_km: float) -> tuple[float, float]:
    """Aggregate coupling + line impedance in pu, computed by hand."""
    zb = 1.5 * 381.58**2 / 10e3
    r = (0.03 + 0.165 * length_km) / zb
    x = W0 * (0.35e-3 + 0.26e-3 * length_km) / zb
    return r, x


def default_inverter(node="inv", kp=None, kq=None) -> DroopInverter:
    mp_pu = 9.3e-5 * 10e3
    nq_pu = 1.3e-3 * 10e3 / 381.58
    gains = DroopGains(kp if kp is not None else mp_pu / W0, kq if kq is not None else nq_pu)
    return DroopInverter(node, gains, TAU)


@pytest.fixture(scope="session")
def cascade():
    return load_scenario("table1_cascade")


@pytest.fixture(scope="session")
def twobus():
    return load_scenario("twobus")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_sessionstart(session):
    session.config._started = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
