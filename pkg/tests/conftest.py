import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from shadowinfo.corpus import canonical, random_corpus

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def programs():
    return {name: canonical(name).to_program() for name in ("INST-A", "INST-B", "INST-C", "INST-D")}


@pytest.fixture(scope="session")
def random_data():
    return random_corpus()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"AC{k}: {'PASS' if ok else 'FAIL'}  {detail}")
