import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_spd(rng, n=None, cond=10.0):
    """Random SPD 2x2 matrices with condition number at most ``cond``."""
    shape = () if n is None else (n,)
    th = rng.uniform(0, np.pi, shape)
    lo = rng.uniform(0.2, 2.0, shape)
    hi = lo * rng.uniform(1.0, cond, shape)
    c, s = np.cos(th), np.sin(th)
    u = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    return u @ (np.stack([lo, hi], -1)[..., :, None] * np.swapaxes(u, -1, -2))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
