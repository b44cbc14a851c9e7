import numpy as np
import pytest

from robust_elicit import rand


@pytest.fixture
def stream():
    def make(tag="t", rep=0, seed=12345):
        return rand.derive_stream(seed, "tests", rep, tag)
    return make


def design(rng, n, p, mu=0.0):
    return rng.gen.normal(mu, 1.0, size=(n, p))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
