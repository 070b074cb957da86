import math

import numpy as np
import pytest

from sidsphere.schedules import BetaSchedule
from sidsphere.simulate import SimConfig, run_ensemble

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance_report():
    return ACCEPTANCE_RESULTS


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def free_circle_runs():
    """beta = 0 on the circle, 20 seeds to t = 1e5."""
    cfg = SimConfig(n=1, schedule=BetaSchedule("constant", 0.0), T=1e5, seed=1000)
    return run_ensemble(cfg, 20)


@pytest.fixture(scope="session")
def repulsion_runs():
    """beta(t) = 0.25 log(t+1) on the circle, 20 seeds to t = 1e5."""
    cfg = SimConfig(n=1, schedule=BetaSchedule("log", 0.25), T=1e5, seed=2000)
    return run_ensemble(cfg, 20)


@pytest.fixture(scope="session")
def attraction_runs():
    """beta = -5 on the circle, 50 seeds to t = 1e4, all started at e0."""
    cfg = SimConfig(n=1, schedule=BetaSchedule("constant", -5.0), T=1e4, seed=3000, start=(1.0, 0.0))
    return run_ensemble(cfg, 50)


def random_rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))
