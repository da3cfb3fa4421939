import numpy as np
import pytest

from tvwellposed.coefficients import random_path
from tvwellposed.statespace import random_passive_realization


def rk4_flow(f, y0, t0, t1, steps):
    """Classical Runge-Kutta for ``y' = f(t, y)``; used as an independent oracle."""
    y = np.array(y0, dtype=float)
    h = (t1 - t0) / steps
    t = t0
    for _ in range(steps):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def random6(rng):
    """Random passive 6-state core with a smooth random path on [0, 1]."""
    sys = random_passive_realization(6, rng, n_in=2)
    path = random_path(6, rng, (0.0, 1.0))
    return sys, path


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
