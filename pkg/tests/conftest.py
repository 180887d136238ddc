import numpy as np
import pytest

from phasesplit.material import IsotropicMaterial


@pytest.fixture
def equal_mat():
    # E = 10, nu = 0.25 gives mu = lambda = 4
    return IsotropicMaterial.from_young_poisson(10.0, 0.25)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
