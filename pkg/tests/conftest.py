import os

import pytest
from hypothesis import HealthCheck, settings

from asep_ldp.exact_rates import ModelParams

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA_KEY = pytest.StashKey[list]()


@pytest.fixture
def p07():
    return ModelParams(0.7)


@pytest.fixture
def criterion_log(request):
    """Collects acceptance lines; they are echoed in the terminal summary."""
    store = request.config.stash.setdefault(_CRITERIA_KEY, [])

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        store.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
