"""Interaction weight schedules ``beta(t)`` and their growth constants."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit
from scipy.optimize import brentq

KINDS = ("constant", "log", "loglog", "linear")
KIND_CODES = {k: i for i, k in enumerate(KINDS)}

# default margin a = (1 + margin)|b| for the logarithmic schedule
LOG_MARGIN = 0.01
# default a = LOGLOG_FRACTION * |b| for the iterated-log schedule
LOGLOG_FRACTION = 0.1


@njit(cache=True, nogil=True)
def beta_value(kind: int, b: float, t: float) -> float:
    if kind == 0:
        return b
    if kind == 1:
        return b * math.log(t + 1.0)
    if kind == 2:
        return b * math.log(math.log(t + math.e))
    return b * t


def _safe_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class BetaSchedule:
    """Weight ``beta(t)`` of the self-interaction drift.

    kinds: ``constant`` (b), ``log`` (b log(t+1)), ``loglog``
    (b log log(t+e)) and ``linear`` (b t).  The last one grows too fast for
    the rate theory and is carried as an unclassified custom schedule.

    ``a`` and ``gamma`` may be overridden; ``gamma`` must lie in (0, 1].
    """

    kind: str = "constant"
    b: float = 0.0
    a: Optional[float] = None
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"schedule kind must be one of {KINDS}, got {self.kind!r}")
        if not math.isfinite(self.b):
            raise ValueError("schedule strength b must be finite")
        if self.gamma is not None and not (0.0 < self.gamma <= 1.0):
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.a is not None and not (self.a >= 0.0):
            raise ValueError(f"a must be nonnegative, got {self.a}")

    @property
    def code(self) -> int:
        return KIND_CODES[self.kind]

    @property
    def classified(self) -> bool:
        return self.kind != "linear"

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "constant":
            out = np.full_like(t, self.b)
        elif self.kind == "log":
            out = self.b * np.log(t + 1.0)
        elif self.kind == "loglog":
            out = self.b * np.log(np.log(t + math.e))
        else:
            out = self.b * t
        return out if out.ndim else float(out)

    def derivative(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "constant":
            out = np.zeros_like(t)
        elif self.kind == "log":
            out = self.b / (t + 1.0)
        elif self.kind == "loglog":
            out = self.b / ((t + math.e) * np.log(t + math.e))
        else:
            out = np.full_like(t, self.b)
        return out if out.ndim else float(out)

    @property
    def constants(self) -> "ScheduleConstants":
        return schedule_constants(self)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "b": self.b}
        if self.a is not None:
            d["a"] = self.a
        if self.gamma is not None:
            d["gamma"] = self.gamma
        return d


@dataclass(frozen=True)
class ScheduleConstants:
    """Growth constants of a schedule.

    ``|beta(t)| <= a log t``, ``|beta'(t)| <= C t^-gamma`` and
    ``beta(t) >= -beta0`` for all ``t >= t0``.  ``a == 0`` for a constant
    schedule stands for the limit of arbitrarily small ``a`` (with
    ``t0 = exp(|b|/a)`` running off to infinity).
    """

    a: float
    gamma: float
    beta0: float
    t0: float
    C: float
    notes: tuple[str, ...] = field(default_factory=tuple)


def schedule_constants(s: BetaSchedule) -> ScheduleConstants:
    b = abs(s.b)
    gamma = 1.0 if s.gamma is None else s.gamma
    if s.kind == "constant":
        a = 0.0 if s.a is None else s.a
        if b == 0.0:
            t0 = 1.0
        elif a == 0.0:
            t0 = math.inf
        else:
            t0 = max(1.0, _safe_exp(b / a))
        return ScheduleConstants(a=a, gamma=gamma, beta0=max(0.0, -s.b), t0=t0, C=0.0)

    if s.kind == "linear":
        return ScheduleConstants(
            a=math.inf, gamma=gamma, beta0=math.inf if s.b < 0 else 0.0, t0=math.inf, C=b,
            notes=("linear growth exceeds any logarithmic bound; schedule is unclassified",),
        )

    beta0 = 0.0 if s.b >= 0 else math.inf
    notes = ("beta is unbounded below",) if s.b < 0 else ()
    if b == 0.0:
        return ScheduleConstants(a=0.0 if s.a is None else s.a, gamma=gamma, beta0=0.0, t0=1.0, C=0.0)

    if s.kind == "log":
        a = b * (1.0 + LOG_MARGIN) if s.a is None else s.a
        if a <= b:
            return ScheduleConstants(a=a, gamma=gamma, beta0=beta0, t0=math.inf, C=b,
                                     notes=notes + ("a must exceed |b| for b log(t+1)",))
        # a log t - |b| log(t+1) is increasing once positive; solve in u = log t
        g = lambda u: a * u - b * math.log1p(math.exp(u))
        hi = 1.0
        while g(hi) <= 0:
            hi *= 2.0
        t0 = math.exp(brentq(g, 1e-12, hi, xtol=1e-12))
        return ScheduleConstants(a=a, gamma=gamma, beta0=beta0, t0=t0, C=b, notes=notes)

    # loglog
    a = b * LOGLOG_FRACTION if s.a is None else s.a
    if a == 0.0:
        return ScheduleConstants(a=0.0, gamma=gamma, beta0=beta0, t0=math.inf, C=b, notes=notes)
    # log(t + e) = logaddexp(u, 1) with u = log t keeps this finite for huge t
    g = lambda u: a * u - b * math.log(np.logaddexp(u, 1.0))
    hi = 1.0
    while g(hi) <= 0:
        hi *= 2.0
    t0 = _safe_exp(brentq(g, 0.0, hi, xtol=1e-12))
    return ScheduleConstants(a=a, gamma=gamma, beta0=beta0, t0=max(t0, 1.0), C=b, notes=notes)


@dataclass
class ScheduleCheck:
    growth_ok: bool
    derivative_ok: bool
    lower_bound_ok: bool
    grid: np.ndarray

    @property
    def ok(self) -> bool:
        return self.growth_ok and self.derivative_ok and self.lower_bound_ok


def check_schedule(s: BetaSchedule, t_max: float = 1e12, points: int = 400) -> ScheduleCheck:
    """Spot-check the growth constants of ``s`` on a geometric grid above t0."""
    c = s.constants
    lo = c.t0 if math.isfinite(c.t0) else None
    if lo is None or lo >= t_max:
        return ScheduleCheck(True, True, True, np.empty(0))
    grid = np.geomspace(max(lo, 1.0 + 1e-12), t_max, points)
    beta = np.asarray(s(grid))
    dbeta = np.asarray(s.derivative(grid))
    tol = 1e-12
    growth = bool(np.all(np.abs(beta) <= c.a * np.log(grid) * (1 + tol) + tol)) if c.a > 0 else bool(np.all(beta == 0))
    deriv = bool(np.all(np.abs(dbeta) <= c.C * grid ** (-c.gamma) * (1 + tol) + tol))
    lower = bool(np.all(beta >= -c.beta0 - tol))
    return ScheduleCheck(growth, deriv, lower, grid)
