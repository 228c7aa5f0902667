import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from flexqueue.model import MarketParams  # noqa: E402

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def fig4_market():
    """The two-type market of the sweep figures with a moderate type-0 job rate."""
    return MarketParams(ell=1, lam=(40.0, 60.0), mu=(5.0, 40.0), theta=4.0)


@pytest.fixture
def small_market():
    return MarketParams(ell=1, lam=(1.2, 0.9), mu=(0.7, 1.1), theta=0.8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Records one summary line per acceptance check; printed after the run."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(label: str, ok: bool, detail: str):
        lines.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
