import math

import numpy as np
import pytest

from sidsphere.schedules import BetaSchedule, beta_value, check_schedule


@pytest.mark.parametrize("kind", ["constant", "log", "loglog", "linear"])
def test_kernel_value_matches_vectorized(kind):
    s = BetaSchedule(kind, 0.7)
    for t in (1.0, 3.5, 1e4):
        assert beta_value(s.code, s.b, t) == pytest.approx(s(t), rel=1e-15)


def test_log_schedule_values():
    s = BetaSchedule("log", 0.25)
    assert s(math.e - 1) == pytest.approx(0.25)
    assert s.derivative(3.0) == pytest.approx(0.25 / 4)


def test_gamma_outside_unit_interval_rejected():
    for g in (0.0, 1.5, -0.1):
        with pytest.raises(ValueError):
            BetaSchedule("log", 1.0, gamma=g)
    with pytest.raises(ValueError):
        BetaSchedule("cubic", 1.0)


@pytest.mark.parametrize("kind,b", [("constant", 0.3), ("constant", -0.5), ("log", 0.25), ("log", 2.0),
                                    ("loglog", 0.5), ("loglog", 3.0)])
def test_growth_constants_hold_past_onset(kind, b):
    s = BetaSchedule(kind, b)
    assert check_schedule(s).ok


def test_constant_schedule_constants():
    c = BetaSchedule("constant", -0.5).constants
    assert (c.a, c.gamma, c.beta0, c.C) == (0.0, 1.0, 0.5, 0.0)


def test_log_schedule_onset_solves_growth_equation():
    s = BetaSchedule("log", 0.25)
    c = s.constants
    assert c.a > 0.25
    assert c.a * math.log(c.t0) == pytest.approx(0.25 * math.log(c.t0 + 1), rel=1e-9)


def test_attractive_log_schedule_is_unbounded_below():
    assert BetaSchedule("log", -1.0).constants.beta0 == math.inf


def test_linear_schedule_is_unclassified():
    s = BetaSchedule("linear", 1.0)
    assert not s.classified
    assert s.constants.a == math.inf


def test_explicit_a_is_respected():
    c = BetaSchedule("log", 0.25, a=0.5).constants
    assert c.a == 0.5
    grid = np.geomspace(c.t0, 1e9, 50)
    assert np.all(0.25 * np.log(grid + 1) <= 0.5 * np.log(grid) + 1e-12)
