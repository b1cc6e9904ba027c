import numpy as np
import pytest

from kflow.kernel import build_compact_kernel, build_fractional_kernel, top_hat


@pytest.fixture(scope="session")
def frac8():
    return build_fractional_kernel(2, 0.5, 1.0, 8.0)


@pytest.fixture(scope="session")
def frac3():
    return build_fractional_kernel(2, 0.5, 1.0, 3.0)


@pytest.fixture(scope="session")
def hat2():
    return build_compact_kernel(2, top_hat(2.0), 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config._acceptance

    def report(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance", {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
