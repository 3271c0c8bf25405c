from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hovi.oracle import OperatorOracle
from hovi.problems import linear_operator

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def identity2():
    return linear_operator(np.eye(2), "identity")


@pytest.fixture
def zero2():
    return OperatorOracle(2, lambda z: np.zeros(2), [lambda z: np.zeros((2, 2))], degree=1, name="zero")


def central_grad(f, z, step=1e-6):
    z = np.asarray(z, dtype=float)
    delta = step * max(1.0, float(np.max(np.abs(z))))
    out = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = delta
        out[i] = (f(z + e) - f(z - e)) / (2 * delta)
    return out


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
