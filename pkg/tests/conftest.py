import numpy as np
import pytest

from smlad.synth import SynthConfig, generate_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_corpus():
    """Default synthetic corpus: 10 anomaly-free train scenes then 10 eval scenes."""
    return generate_corpus(SynthConfig(), 20, 10)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
