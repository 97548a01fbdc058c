import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_acceptance = []


@pytest.fixture
def rng():
    return np.random.default_rng(20191015)


@pytest.fixture
def report(request):
    """Attach measured numbers to an acceptance test's summary line."""
    def _report(**values):
        request.node.user_properties.extend(values.items())
    return _report


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    _acceptance.append((report.nodeid.split("::")[-1], report.outcome,
                        dict(report.user_properties)))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, props in _acceptance:
        extra = ", ".join(f"{k}={v}" for k, v in props.items())
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}" + (f"  [{extra}]" if extra else ""))
