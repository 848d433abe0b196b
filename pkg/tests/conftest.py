import sys
import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("transmute", max_examples=25, deadline=None)
settings.load_profile("transmute")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def bump(x, a, b):
    """Smooth bump vanishing with all derivatives outside (a, b)."""
    t = (x - a) / (b - a)
    out = np.zeros_like(x, dtype=float)
    inside = (t > 0) & (t < 1)
    out[inside] = np.exp(-1.0 / (t[inside] * (1 - t[inside])))
    return out


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
