import numpy as np
import pytest

from noonchip import backend


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_report_header(config):
    return f"noonchip kernel backend: {backend.NAME} (available: {', '.join(backend.available())})"


def pytest_terminal_summary(terminalreporter):
    import sys

    module = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
