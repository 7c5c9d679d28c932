import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from harmonet.network_core import ExplicitNetwork

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def p3(c01=1.0, c12=1.0):
    return ExplicitNetwork([(0, 1, c01), (1, 2, c12)])


def triangle(c=1.0):
    return ExplicitNetwork([(0, 1, c), (1, 2, c), (0, 2, c)])


def dense_laplacian(edges, verts):
    """Plain dense assembly from an edge list, independent of the library."""
    pos = {v: k for k, v in enumerate(verts)}
    L = np.zeros((len(verts), len(verts)))
    for x, y, c in edges:
        i, j = pos[x], pos[y]
        L[i, i] += c
        L[j, j] += c
        L[i, j] -= c
        L[j, i] -= c
    return L


@pytest.fixture
def P3():
    return p3()


@pytest.fixture
def TRI():
    return triangle()


# acceptance lines, collected by test_acceptance and echoed in the terminal summary
ACCEPTANCE: dict = {}


def record(number: int, ok: bool, detail: str) -> str:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
