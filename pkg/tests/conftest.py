import numpy as np
import pytest

from attrition_ri import StatConfig

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ALL_CONFIGS = [
    StatConfig.wilcoxon(),
    StatConfig.stephenson(2),
    StatConfig.stephenson(3),
    StatConfig.stephenson(6),
    StatConfig.mann_whitney(),
    StatConfig.mwu_power(2),
    StatConfig.mwu_power(3),
    StatConfig.mwu_power(6),
]
