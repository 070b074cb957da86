"""Gibbs measures ``Pi(m)(dx) ∝ exp(-m.x) dx`` on S^n and the constant Lambda.

By rotational symmetry everything reduces to the one-dimensional integral

    H(r) = ∫_0^π exp(-r cos x) sin(x)^(n-1) dx,

with mean profile ``rho = H'/H`` and eigenvalue profile
``lambda(r) = 2 rho(r)/r - rho'(r)``.  The mean profile is computed along
two independent routes: direct quadrature of H and its derivatives, and
integration of the Riccati equation ``rho' = 1 - rho (n/r + rho)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.integrate import quad, solve_ivp

QUAD_EPSABS = 1e-12
QUAD_EPSREL = 1e-10
OVERFLOW_R = 700.0
SERIES_CUTOFF = 1e-3
ODE_TOL = 1e-11
GOLDEN_TOL = 1e-8
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class GibbsError(RuntimeError):
    pass


class ODEIntegrationError(GibbsError):
    def __init__(self, message: str, last_r: float):
        super().__init__(f"{message} (last good r = {last_r!r})")
        self.last_r = last_r


class MaximizationError(GibbsError):
    pass


class MultimodalityError(MaximizationError):
    def __init__(self, n: int, locations):
        super().__init__(f"lambda for n={n} has several local maxima near r = {list(locations)}")
        self.locations = list(locations)


# ---------------------------------------------------------------------------
# quadrature route


class QuadValue(NamedTuple):
    """A quadrature result; ``rescaled`` means the integrand carried exp(-r)."""

    value: float
    rescaled: bool = False


def _check_n(n: int):
    if int(n) != n or n < 1:
        raise ValueError(f"sphere dimension must be a positive integer, got {n}")


def _moment(r: float, n: int, power_cos: int, power_sin: int, rescale: bool) -> float:
    shift = r if rescale else 0.0

    def f(x):
        c = math.cos(x)
        return c**power_cos * math.exp(-r * c - shift) * math.sin(x) ** power_sin

    # split at π/2: for large r the mass sits near π
    a, _ = quad(f, 0.0, math.pi / 2, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
    b, _ = quad(f, math.pi / 2, math.pi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
    return a + b


def h_quadrature(r: float, n: int, deriv_order: int = 0) -> QuadValue:
    """H(r) or its first or second r-derivative by adaptive quadrature.

    For ``r > 700`` the integrand is multiplied by ``exp(-r)`` to stay
    finite, and the result is flagged as rescaled.
    """
    _check_n(n)
    if r < 0:
        raise ValueError("r must be nonnegative")
    if deriv_order not in (0, 1, 2):
        raise ValueError("deriv_order must be 0, 1 or 2")
    rescale = r > OVERFLOW_R
    sign = -1.0 if deriv_order == 1 else 1.0
    return QuadValue(sign * _moment(r, n, deriv_order, n - 1, rescale), rescale)


def rho_quadrature(r: float, n: int) -> float:
    """Mean profile ``H'(r)/H(r)`` in [0, 1)."""
    _check_n(n)
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r == 0:
        return 0.0
    h = h_quadrature(r, n, 0)
    h1 = h_quadrature(r, n, 1)
    return h1.value / h.value


def rho_prime_quadrature(r: float, n: int) -> float:
    """``H''/H - (H'/H)^2``, the variance of cos under the tilted weight."""
    if r == 0:
        return 1.0 / (n + 1)
    h = h_quadrature(r, n, 0).value
    return h_quadrature(r, n, 2).value / h - (h_quadrature(r, n, 1).value / h) ** 2


class QuadratureRho:
    """Callable ``r -> rho(r)`` backed by quadrature, vectorized over r."""

    def __init__(self, n: int):
        _check_n(n)
        self.n = n

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        out = np.vectorize(lambda s: rho_quadrature(float(s), self.n), otypes=[float])(r)
        return out if out.ndim else float(out)

    def derivative(self, r):
        return rho_rhs(r, self(r), self.n)


# ---------------------------------------------------------------------------
# ODE route


def rho_rhs(r, rho, n):
    """Right-hand side ``1 - rho (n/r + rho)``, with the limit 1/(n+1) at r = 0."""
    r = np.asarray(r, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0, 1.0 - rho * (n / np.where(r > 0, r, 1.0) + rho), 1.0 / (n + 1))
    return out if out.ndim else float(out)


def rho_series(r, n):
    """Small-r expansion ``r/(n+1) - r^3/((n+1)^2 (n+3))``."""
    r = np.asarray(r, dtype=np.float64)
    return r / (n + 1) - r**3 / ((n + 1) ** 2 * (n + 3))


@dataclass
class ODERho:
    """Dense evaluator of rho on [0, r_max] from the Riccati equation."""

    n: int
    r_max: float
    r_start: float
    _sol: object = field(repr=False)

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        if np.any(r < 0) or np.any(r > self.r_max * (1 + 1e-12)):
            raise ValueError(f"r outside [0, {self.r_max}]")
        small = r < self.r_start
        out = np.empty_like(r)
        out[small] = r[small] / (self.n + 1)
        if np.any(~small):
            out[~small] = self._sol(r[~small])[0]
        return out if out.ndim else float(out)

    def derivative(self, r):
        return rho_rhs(r, self(r), self.n)


def rho_ode(r_max: float, n: int, r_start: float = SERIES_CUTOFF, tol: float = ODE_TOL) -> ODERho:
    """Integrate the Riccati equation for rho from ``r_start`` to ``r_max``.

    The initial value comes from the two-term series; below ``r_start`` the
    evaluator returns ``r/(n+1)``.
    """
    _check_n(n)
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    if r_max <= r_start:
        return ODERho(n, r_max, max(r_start, r_max * 2), None)
    y0 = [float(rho_series(r_start, n))]
    sol = solve_ivp(
        lambda r, y: [1.0 - y[0] * (n / r + y[0])],
        (r_start, r_max),
        y0,
        method="DOP853",
        rtol=tol,
        atol=tol,
        dense_output=True,
    )
    if sol.status != 0:
        last = float(sol.t[-1]) if len(sol.t) else r_start
        raise ODEIntegrationError(sol.message, last)
    return ODERho(n, r_max, r_start, sol.sol)


# ---------------------------------------------------------------------------
# eigenvalue profile and its maximum


def lambda_profile(r, n: int, rho_eval: Optional[Callable] = None):
    """``lambda(r) = 2 rho(r)/r - rho'(r)``, with value 1/(n+1) at r = 0.

    ``rho'`` is taken from the Riccati right-hand side, so only values of
    rho are needed.  Without ``rho_eval`` an ODE evaluator is built.
    """
    _check_n(n)
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    if rho_eval is None:
        rho_eval = rho_ode(max(float(np.max(r)), 1.0), n)
    rho = np.asarray(rho_eval(r), dtype=np.float64)
    safe = np.where(r > 0, r, 1.0)
    # 2 rho/r - (1 - n rho/r - rho^2)
    lam = np.where(r > 0, (n + 2) * rho / safe + rho * rho - 1.0, 1.0 / (n + 1))
    return lam if lam.ndim else float(lam)


def lambda_derivative(r, n: int, rho_eval: Callable):
    r = np.asarray(r, dtype=np.float64)
    rho = np.asarray(rho_eval(r), dtype=np.float64)
    drho = 1.0 - rho * (n / r + rho)
    out = (n + 2) * (drho / r - rho / (r * r)) + 2.0 * rho * drho
    return out if out.ndim else float(out)


def golden_section_max(f: Callable[[float], float], lo: float, hi: float, tol: float = GOLDEN_TOL,
                       max_iter: int = 200) -> tuple[float, float]:
    """Maximize a unimodal ``f`` on [lo, hi]; returns ``(argmax, max)``."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _local_maxima(values: np.ndarray) -> list[int]:
    idx = []
    for i in range(1, len(values) - 1):
        if values[i] > values[i - 1] and values[i] >= values[i + 1]:
            idx.append(i)
    return idx


def capital_lambda(n: int, scan_points: int = 400, rho_eval: Optional[Callable] = None) -> tuple[float, float]:
    """``(Lambda, r_star)``: the maximum of lambda over r >= 0 and where it sits.

    The search bracket [0, 2(n+1)] is scanned for local maxima, the single
    interior one is refined by golden section and polished by a root solve
    of lambda'.  A maximum on the bracket edge widens the bracket once.
    """
    _check_n(n)
    R = 2.0 * (n + 1)
    if rho_eval is not None:
        R = min(R, getattr(rho_eval, "r_max", R))
    for attempt in range(2):
        rho = rho_eval if rho_eval is not None else rho_ode(R, n)
        grid = np.linspace(0.0, R, scan_points + 1)
        lam = lambda_profile(grid, n, rho)
        peaks = _local_maxima(lam)
        if len(peaks) > 1:
            raise MultimodalityError(n, grid[peaks])
        if not peaks or np.argmax(lam) == len(lam) - 1:
            if rho_eval is not None:
                raise MaximizationError(f"lambda for n={n} peaks at the edge of the supplied evaluator's range")
            R *= 2.0
            continue
        i = peaks[0]
        lo, hi = grid[i - 1], grid[i + 1]
        f = lambda s: float(lambda_profile(s, n, rho))
        r_star, _ = golden_section_max(f, lo, hi)
        # golden section pins the flat top only to ~sqrt(eps); lambda' has a clean root
        a, b = max(lo, r_star - 1e-3), min(hi, r_star + 1e-3)
        da, db = lambda_derivative(a, n, rho), lambda_derivative(b, n, rho)
        if da > 0 > db:
            from scipy.optimize import brentq

            r_star = brentq(lambda s: lambda_derivative(s, n, rho), a, b, xtol=1e-12)
        Lam = f(r_star)
        if not (1.0 / (n + 1) <= Lam < 2.0 / (n + 1)):
            raise MaximizationError(f"Lambda={Lam} for n={n} violates 1/(n+1) <= Lambda < 2/(n+1)")
        return Lam, float(r_star)
    raise MaximizationError(f"lambda for n={n} still increasing at r={R}")


@dataclass
class GibbsProfile:
    """Evaluators for rho and lambda on one sphere, plus Lambda and its argmax."""

    n: int
    rho: Callable
    Lambda: float
    r_star: float
    method: str = "ode"

    def rho_prime(self, r):
        return self.rho.derivative(r)

    def lam(self, r):
        return lambda_profile(r, self.n, self.rho)


def gibbs_profile(n: int, r_max: Optional[float] = None, method: str = "ode") -> GibbsProfile:
    _check_n(n)
    R = max(2.0 * (n + 1), r_max or 0.0)
    if method == "ode":
        rho = rho_ode(R, n)
    elif method == "quadrature":
        rho = QuadratureRho(n)
    else:
        raise ValueError("method must be 'ode' or 'quadrature'")
    Lam, r_star = capital_lambda(n)
    return GibbsProfile(n=n, rho=rho, Lambda=Lam, r_star=r_star, method=method)


# ---------------------------------------------------------------------------
# direct covariance route


def gibbs_covariance(m, n: int) -> np.ndarray:
    """Covariance matrix of ``v(x) = x`` under Pi(m), by direct quadrature.

    In coordinates adapted to the axis of m, x = cos(θ) a + sin(θ) u with u
    uniform on the unit sphere orthogonal to the axis a, so only the
    moments E cos θ, E cos²θ and E sin²θ against exp(-|m| cos θ) sin^(n-1)θ
    are needed.
    """
    _check_n(n)
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (n + 1,):
        raise ValueError(f"m must have {n + 1} components")
    r = float(np.linalg.norm(m))
    if r == 0:
        raise ValueError("m must be nonzero")
    rescale = r > OVERFLOW_R
    z = _moment(r, n, 0, n - 1, rescale)
    e_cos = _moment(r, n, 1, n - 1, rescale) / z
    e_cos2 = _moment(r, n, 2, n - 1, rescale) / z
    e_sin2 = _moment(r, n, 0, n + 1, rescale) / z
    axis = m / r
    par = np.outer(axis, axis)
    return (e_cos2 - e_cos**2) * par + (e_sin2 / n) * (np.eye(n + 1) - par)


def power_iteration(A: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    """Largest eigenvalue of a symmetric positive semidefinite matrix.

    Stops once the eigen-residual |A v - lam v| drops below ``tol``.
    """
    d = A.shape[0]
    v = np.arange(1.0, d + 1.0) + 0.5 * np.cos(np.arange(d))
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = A @ v
        lam = float(v @ w)
        if np.linalg.norm(w - lam * v) <= tol:
            return lam
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
    return lam


def cov_eigen_oracle(m, n: int) -> float:
    """Largest eigenvalue of Cov_{Pi(m)}(v), assembled entrywise and power-iterated."""
    return power_iteration(gibbs_covariance(m, n))


# ---------------------------------------------------------------------------
# rates and regimes


def default_kappa(n: int) -> float:
    return 2.0 * (n + 3)


@dataclass
class RateParameters:
    """The rate exponent ``eta = min(gamma/2 - a kappa, 1 - Lambda beta0)``."""

    a: float
    gamma: float
    beta0: float
    n: int
    kappa: float
    Lambda: float
    eta: float
    valid: bool
    reasons: list[str] = field(default_factory=list)


def rate_eta(a: float, gamma: float, beta0: float, n: int, Lambda: float,
             kappa: Optional[float] = None) -> RateParameters:
    """Rate exponent with validity flags (never raises on invalid hypotheses)."""
    if not (0.0 < gamma <= 1.0):
        raise ValueError("gamma must lie in (0, 1]")
    if a < 0 or beta0 < 0:
        raise ValueError("a and beta0 must be nonnegative")
    kappa = default_kappa(n) if kappa is None else float(kappa)
    eta = min(gamma / 2.0 - a * kappa, 1.0 - Lambda * beta0)
    reasons = []
    if not gamma > 2.0 * a * kappa:
        reasons.append(f"gamma={gamma} does not exceed 2 a kappa={2.0 * a * kappa}")
    if not beta0 * Lambda < 1.0:
        reasons.append(f"beta0={beta0} is not below 1/Lambda={1.0 / Lambda}")
    return RateParameters(a=a, gamma=gamma, beta0=beta0, n=n, kappa=kappa, Lambda=Lambda,
                          eta=eta, valid=not reasons, reasons=reasons)


@dataclass
class RegimeClassification:
    regime: str
    exponent: Optional[float]
    b: float
    n: int
    threshold: float


def classify_regime(b: float, n: int) -> RegimeClassification:
    """Long-time behaviour of the occupation measure for constant ``beta = b``.

    Uniform limit with rate exponent min(1/2, 1 + b/(n+1)) above the
    threshold -(n+1), uniform limit without a useful rate at it, and
    concentration below it.
    """
    _check_n(n)
    thr = -(n + 1.0)
    if b > thr:
        return RegimeClassification("uniform_limit_with_rate", min(0.5, 1.0 + b / (n + 1)), b, n, thr)
    if b == thr:
        return RegimeClassification("uniform_limit", 0.0, b, n, thr)
    return RegimeClassification("concentration", None, b, n, thr)


def lambda_table(ns=(1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20, 50, 100)) -> list[dict]:
    rows = []
    for n in ns:
        Lam, r_star = capital_lambda(int(n))
        rows.append({"n": int(n), "Lambda": Lam, "Lambda_times_n_plus_1": Lam * (n + 1), "argmax": r_star})
    return rows


def profile_rows(ns=(1, 2, 3, 4), r_max: float = 10.0, r_step: float = 0.01) -> list[dict]:
    k = int(round(r_max / r_step))
    r = np.arange(k + 1) * r_step
    rows = []
    for n in ns:
        rho = rho_ode(max(r_max, 1.0), int(n))
        rv = np.asarray(rho(r))
        lv = np.asarray(lambda_profile(r, int(n), rho))
        rows.extend({"n": int(n), "r": float(a), "rho": float(b), "lambda": float(c)} for a, b, c in zip(r, rv, lv))
    return rows
