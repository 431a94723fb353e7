import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def criterion_log(request):
    """Shared registry: criterion number -> list of (passed, detail) records."""
    return request.config.stash.setdefault(_ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(_ACCEPTANCE, None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(log):
        records = log[k]
        status = {True: "PASS", False: "FAIL", None: "NOT REPRODUCIBLE"}
        verdict = None if all(p is None for p, _ in records) else all(p is not False for p, _ in records)
        terminalreporter.write_line(f"criterion {k}: {status[verdict]}")
        for passed, detail in records:
            terminalreporter.write_line(f"    [{status[passed]}] {detail}")
