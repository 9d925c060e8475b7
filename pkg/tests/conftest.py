import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def simplex_points(k):
    from hypothesis import strategies as st
    from hypothesis.extra.numpy import arrays

    raw = arrays(np.float64, k, elements=st.floats(0.0, 1.0, allow_nan=False))
    return raw.filter(lambda w: w.sum() > 1e-3).map(lambda w: w / w.sum())


def stochastic_matrices(k):
    from hypothesis import strategies as st
    from hypothesis.extra.numpy import arrays

    raw = arrays(np.float64, (k, k), elements=st.floats(0.0, 1.0, allow_nan=False))
    return raw.filter(lambda m: np.all(m.sum(axis=1) > 1e-3)).map(lambda m: m / m.sum(axis=1, keepdims=True))


@pytest.fixture
def toy_ensemble():
    """Four sites with (s, t) color pairs (0,0), (0,1), (1,1), (0,0)."""
    from exmarkov.ensemble import EnsemblePath

    return EnsemblePath(2, 4, 1.0, [0, 0, 1, 0], times=[0.5], sites=[1], src=[0], dst=[1])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
