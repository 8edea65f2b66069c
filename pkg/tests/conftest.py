import numpy as np
import pytest

from mmwave_cs.analysis import AnalysisContext


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_ctx():
    return AnalysisContext()


def ctx_for(protocol, **kw):
    return AnalysisContext(protocol=protocol, **kw)


def pytest_terminal_summary(terminalreporter):
    from oracles import REPORT

    if REPORT:
        terminalreporter.section("acceptance criteria")
        for k in sorted(REPORT):
            terminalreporter.write_line(REPORT[k])
