import numpy as np
import pytest

from mevsindy.model import simulate, table1_model
from mevsindy.series import ForcingConfig, TimeSeries


def tone(fn, dt=0.01, n=8192, t0=0.0, forcing=None):
    t = t0 + dt * np.arange(n)
    return TimeSeries(t0, dt, fn(t), forcing=forcing)


@pytest.fixture(scope="session")
def table1_training():
    """Benchmark training trajectory: beta=0.5, Omega=1.999, x0=[0, 0]."""
    return simulate(table1_model(), ForcingConfig(0.5, 1.999), [0.0, 0.0], 1000.0, 0.01)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdicts, one line per criterion."""
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
