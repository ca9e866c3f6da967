import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tcawrist import WristModel

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def model():
    return WristModel()


@pytest.fixture(scope="session")
def flat_model():
    """Prototype model with gravity off, so the straight pose at ambient is an equilibrium."""
    from dataclasses import replace

    m = WristModel()
    return replace(m, body=replace(m.body, gravity=0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one pass/fail line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
