"""Verdicts on trajectory records: decay exponents, shadowing residuals, uniformity."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .simulate import DEFAULT_RATIO, TrajectoryRecord

LOG_GUARD = 1e-14
MIN_POINTS = 8
RATE_SLACK = 0.15
LIMSUP_NOTE = (
    "finite-window regression slopes cannot certify a limsup; "
    "the band check is one-sided with slack"
)


class DiagnosticsError(ValueError):
    pass


@dataclass
class RateEstimate:
    slope: float
    intercept: float
    window: tuple[float, float]
    stderr: float
    label: str
    n_used: int
    n_dropped: int

    def to_dict(self) -> dict:
        return asdict(self)


def fit_power_law(times, values, reference: float = 0.0, window=None, label: str = "f") -> RateEstimate:
    """Least squares of ``log|values - reference|`` against ``log t``."""
    t = np.asarray(times, dtype=np.float64)
    y = np.abs(np.asarray(values, dtype=np.float64) - reference)
    lo, hi = window if window is not None else (float(t[0]), float(t[-1]))
    if not lo < hi:
        raise DiagnosticsError(f"empty window ({lo}, {hi})")
    inside = (t >= lo * (1 - 1e-9)) & (t <= hi * (1 + 1e-9))
    usable = inside & (y >= LOG_GUARD)
    k = int(usable.sum())
    if k < MIN_POINTS:
        raise DiagnosticsError(f"only {k} usable checkpoints in window ({lo}, {hi}); need {MIN_POINTS}")
    lt, ly = np.log(t[usable]), np.log(y[usable])
    fit = stats.linregress(lt, ly)
    return RateEstimate(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        window=(float(lo), float(hi)),
        stderr=float(fit.stderr),
        label=label,
        n_used=k,
        n_dropped=int(inside.sum()) - k,
    )


def estimate_rate(record: TrajectoryRecord, label: str = "x0", window=None,
                  reference: Optional[float] = None) -> RateEstimate:
    """Empirical decay exponent of ``|mu_t(f) - U(f)|`` over a window of checkpoints.

    ``label`` names a registered test function, a feature component ``m<i>``
    or ``m_norm`` for ``|m_t|``; the uniform mean is taken from the record
    unless ``reference`` is given.
    """
    y = record.series(label)
    ref = record.uniform_mean(label) if reference is None else reference
    if window is not None:
        lo, hi = window
        if lo < record.times[0] * (1 - 1e-9) or hi > record.times[-1] * (1 + 1e-9):
            raise DiagnosticsError(f"window {window} is outside the record's range "
                                   f"[{record.times[0]}, {record.times[-1]}]")
    return fit_power_law(record.times, y, ref, window, label)


@dataclass
class ShadowingReport:
    """Deviation of the occupation average from the linear relaxation flow.

    ``log_times[k] = log t_k``; ``residuals[k]`` is the sup over checkpoints
    ``t_j`` with ``0 <= log t_j - log t_k <= horizon`` of
    ``|mu_{t_j}(f) - flow(log t_j - log t_k, mu_{t_k}(f))|``.
    """

    label: str
    horizon: float
    times: np.ndarray
    log_times: np.ndarray
    residuals: np.ndarray
    exponent: float
    exponent_stderr: float
    n_fit: int

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "horizon": self.horizon,
            "times": self.times.tolist(),
            "log_times": self.log_times.tolist(),
            "residuals": self.residuals.tolist(),
            "exponent": self.exponent,
            "exponent_stderr": self.exponent_stderr,
            "n_fit": self.n_fit,
        }


def relaxation_flow(s, x, target: float):
    """Solution at time ``s`` of ``y' = -y + target`` started from ``x``."""
    s = np.asarray(s, dtype=np.float64)
    return np.exp(-s) * x + (1.0 - np.exp(-s)) * target


def shadowing_curve(times, values, horizon: float, target: float = 0.0,
                    max_ratio: float = DEFAULT_RATIO * 1.05) -> tuple[np.ndarray, np.ndarray]:
    """Shadowing residuals of a checkpointed series on the logarithmic time scale."""
    t = np.asarray(times, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    if horizon <= 0:
        raise DiagnosticsError("horizon must be positive")
    ratios = t[1:] / t[:-1]
    if np.any(ratios <= 1.0):
        raise DiagnosticsError("checkpoint times must be strictly increasing")
    if np.any(ratios > max_ratio):
        raise DiagnosticsError(f"checkpoint grid too coarse: ratio {ratios.max():.4f} exceeds {max_ratio:.4f}")
    tau = np.log(t)
    keep = []
    res = []
    for k in range(len(t)):
        if tau[k] + horizon > tau[-1] + 1e-12:
            break
        j = (tau >= tau[k]) & (tau <= tau[k] + horizon + 1e-12)
        dev = np.abs(y[j] - relaxation_flow(tau[j] - tau[k], y[k], target))
        keep.append(k)
        res.append(float(dev.max()))
    return np.array(keep, dtype=int), np.array(res)


def shadowing_residual(record: TrajectoryRecord, label: str = "x0", horizon: float = 1.0,
                       fit_window=None) -> ShadowingReport:
    """Residuals against the relaxation flow and their fitted exponential decay rate.

    The exponent is the least-squares slope of ``log residual`` against
    ``log t`` (the exponential time scale), restricted to ``fit_window``
    in natural time when given.
    """
    y = record.series(label)
    return shadowing_from_series(record.times, y, horizon, record.uniform_mean(label), fit_window, label)


def shadowing_from_series(times, values, horizon: float = 1.0, target: float = 0.0,
                          fit_window=None, label: str = "f") -> ShadowingReport:
    t = np.asarray(times, dtype=np.float64)
    idx, res = shadowing_curve(t, values, horizon, target)
    if idx.size == 0:
        raise DiagnosticsError("record too short for the requested horizon")
    tk = t[idx]
    tau = np.log(tk)
    sel = res >= LOG_GUARD
    if fit_window is not None:
        lo, hi = fit_window
        sel &= (tk >= lo * (1 - 1e-9)) & (tk <= hi * (1 + 1e-9))
    if sel.sum() < 3:
        exponent, err = math.nan, math.nan
    else:
        fit = stats.linregress(tau[sel], np.log(res[sel]))
        exponent, err = float(fit.slope), float(fit.stderr)
    return ShadowingReport(label=label, horizon=horizon, times=tk, log_times=tau, residuals=res,
                           exponent=exponent, exponent_stderr=err, n_fit=int(sel.sum()))


@dataclass
class UniformityResult:
    statistic: float
    p_value: float
    method: str
    n_records: int
    t_snapshot: float
    component_p_values: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def sphere_marginal_cdf(u, n: int):
    """CDF of one coordinate of a uniform point on S^n (density ∝ (1-u²)^((n-2)/2))."""
    u = np.asarray(u, dtype=np.float64)
    return stats.beta(n / 2.0, n / 2.0).cdf((u + 1.0) / 2.0)


def uniformity_from_points(points, n: int, bins: int = 36, t_snapshot: float = math.nan) -> UniformityResult:
    """Test rows of ``points`` (on S^n) against the uniform law.

    Circle: chi-square of the angle over ``bins`` equal bins.  Higher
    spheres: Kolmogorov-Smirnov per coordinate against the exact marginal,
    combined with a Bonferroni correction.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != n + 1:
        raise DiagnosticsError(f"points must have shape (k, {n + 1})")
    if n == 1:
        ang = np.arctan2(pts[:, 1], pts[:, 0])
        counts, _ = np.histogram(ang, bins=bins, range=(-math.pi, math.pi))
        res = stats.chisquare(counts)
        return UniformityResult(float(res.statistic), float(res.pvalue), f"chi-square, {bins} bins",
                                len(pts), t_snapshot)
    cdf = lambda u: sphere_marginal_cdf(u, n)
    ps, ds = [], []
    for i in range(n + 1):
        r = stats.kstest(pts[:, i], cdf)
        ps.append(float(r.pvalue))
        ds.append(float(r.statistic))
    p = min(1.0, (n + 1) * min(ps))
    return UniformityResult(max(ds), p, "Kolmogorov-Smirnov per coordinate, Bonferroni", len(pts),
                            t_snapshot, ps)


def uniformity_test(records: Sequence[TrajectoryRecord], t_snapshot: float, min_records: int = 1000,
                    bins: int = 36) -> UniformityResult:
    """Uniformity of the law of ``X_{t_snapshot}`` across an ensemble of records."""
    if len(records) < min_records:
        raise DiagnosticsError(f"need at least {min_records} records, got {len(records)}")
    n = records[0].config.n
    pts = []
    for rec in records:
        k = rec.checkpoint_index(t_snapshot)
        if abs(rec.times[k] - t_snapshot) > max(rec.config.h_max, rec.config.h0) + 1e-9 * t_snapshot:
            raise DiagnosticsError(f"record seed={rec.seed} has no checkpoint at t={t_snapshot}")
        pts.append(rec.x[k])
    return uniformity_from_points(np.array(pts), n, bins, t_snapshot)


def median_slope(records: Sequence[TrajectoryRecord], label: str, window) -> tuple[float, list[RateEstimate]]:
    """Median of per-path slopes (paths are judged individually, then aggregated)."""
    ests = [estimate_rate(r, label, window) for r in records]
    return float(np.median([e.slope for e in ests])), ests


@dataclass
class BandCheck:
    slope: float
    eta: float
    slack: float
    passed: bool
    note: str = LIMSUP_NOTE


def band_check(slope: float, eta: float, slack: float = RATE_SLACK) -> BandCheck:
    """One-sided check ``slope <= -eta + slack``."""
    return BandCheck(slope, eta, slack, bool(slope <= -eta + slack))
