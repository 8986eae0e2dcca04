import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from coolopt.materials import PhysicalProperties, RampParameters
from coolopt.mesh import build_mesh
from coolopt.objective import ThermofluidModel

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

LX, LY = 10e-3, 7e-3

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture(scope="session")
def props():
    return PhysicalProperties()


@pytest.fixture(scope="session")
def ramp(props):
    return RampParameters.defaults(props, LX)


@pytest.fixture
def small_model(props, ramp):
    return ThermofluidModel(build_mesh(LX, LY, 20, 14), props, ramp, 200.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d} ({name}): {'PASS' if ok else 'FAIL'}  {detail}")
