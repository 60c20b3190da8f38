import numpy as np
import pytest

from fedht.kernels import IMPLEMENTATIONS


@pytest.fixture(params=sorted(IMPLEMENTATIONS))
def backend(request):
    return IMPLEMENTATIONS[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_criterion_lines = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _criterion_lines.extend(ln for ln in report.capstdout.splitlines() if ln.startswith("[criterion"))


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_criterion_lines):
            terminalreporter.write_line(line)
