import sys

import numpy as np
import pytest

from oltae.estimator import Correspondence
from oltae.rotations import cayley


def random_q(rng, q_max):
    d = rng.standard_normal(3)
    return d / np.linalg.norm(d) * q_max * rng.uniform()


def random_t(rng, t_max):
    d = rng.standard_normal(3)
    return d / np.linalg.norm(d) * t_max * rng.uniform()


def well_spread_points(rng, n, half=5.0, max_cond=1e4):
    """Uniform points whose centred scatter (inertia tensor) is well conditioned."""
    while True:
        a = rng.uniform(-half, half, size=(n, 3))
        d = a - a.mean(axis=0)
        inertia = np.trace(d.T @ d) * np.eye(3) - d.T @ d
        if np.linalg.cond(inertia) < max_cond:
            return a


def make_problem(rng, n, q_max=1.0, t_max=100.0, sigma=0.0, weight_sigma=None):
    q = random_q(rng, q_max)
    t = random_t(rng, t_max)
    a = well_spread_points(rng, n)
    b = a @ cayley(q).T + t + sigma * rng.standard_normal((n, 3))
    ws = weight_sigma if weight_sigma is not None else (sigma if sigma > 0 else 1.0)
    return [Correspondence(a[i], b[i], ws) for i in range(n)], q, t


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def trn_frames():
    from oltae.scenario import build_scenario

    return build_scenario()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
