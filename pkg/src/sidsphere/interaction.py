"""Interaction features, the empirical drift and the occupation state.

The interaction kernel is ``V(x, y) = v(x) . v(y)`` for a centered feature
map ``v`` with sup norm 1, so the empirical potential at time t is
``m_t . v(x)`` with ``m_t`` the time average of ``v`` along the path.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import (
    SpherePoint,
    TangentVector,
    coordinate_surface_gradient,
    project_to_tangent,
    uniform_points,
)


@dataclass(frozen=True)
class FeatureMap:
    """A feature map ``v: S^n -> R^N`` together with its surface gradients.

    ``evaluate`` takes a SpherePoint and returns a length-N array,
    ``gradient`` takes ``(point, i)`` and returns the TangentVector of the
    surface gradient of ``v_i``.
    """

    N: int
    evaluate: Callable[[SpherePoint], np.ndarray]
    gradient: Callable[[SpherePoint, int], TangentVector]
    sup_norm: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if self.sup_norm != 1.0:
            raise ValueError("feature maps must be normalized to sup norm 1")


def identity_features(n: int) -> FeatureMap:
    """The embedding ``v(x) = x`` of S^n, so ``V(x, y) = cos d(x, y)``."""
    return FeatureMap(
        N=n + 1,
        evaluate=lambda x: np.array(x.coords),
        gradient=coordinate_surface_gradient,
        name="identity",
    )


@dataclass
class FeatureCheck:
    sup: float
    mean: np.ndarray
    stderr: np.ndarray
    n_samples: int

    @property
    def normalized(self) -> bool:
        return self.sup <= 1.0 + 1e-9

    @property
    def centered(self) -> bool:
        return bool(np.all(np.abs(self.mean) <= 5.0 * self.stderr + 1e-15))


def check_feature_map(features: FeatureMap, n: int, n_samples: int = 10_000, seed: int = 0) -> FeatureCheck:
    """Monte Carlo check of the normalization and centering of a feature map."""
    pts = uniform_points(np.random.default_rng(seed), n_samples, n + 1)
    vals = np.array([features.evaluate(SpherePoint(p)) for p in pts])
    norms = np.linalg.norm(vals, axis=1)
    return FeatureCheck(
        sup=float(norms.max()),
        mean=vals.mean(axis=0),
        stderr=vals.std(axis=0, ddof=1) / np.sqrt(n_samples),
        n_samples=n_samples,
    )


@dataclass(frozen=True)
class TestFunction:
    """A test function ``f`` registered for running occupation averages.

    ``func`` must broadcast over leading axes: it maps an array of points of
    shape ``(..., n+1)`` to values of shape ``(...)``.  ``uniform_mean`` is
    the integral of ``f`` against the uniform law, used as the reference
    value in the diagnostics.  Equality ignores ``func``: labels name functions.
    ``coordinate`` marks ``f(x) = x_i``, whose
    running mean coincides with a component of the feature mean.
    """

    __test__ = False  # not a pytest class

    label: str
    func: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    uniform_mean: float = 0.0
    coordinate: Optional[int] = None

    def __call__(self, x) -> float:
        return float(self.func(np.asarray(x, dtype=np.float64)))


def coordinate_test(i: int) -> TestFunction:
    return TestFunction(label=f"x{i}", func=lambda p, i=i: p[..., i], uniform_mean=0.0, coordinate=i)


def product_test(i: int, j: int, n: int) -> TestFunction:
    return TestFunction(
        label=f"x{i}x{j}",
        func=lambda p, i=i, j=j: p[..., i] * p[..., j],
        uniform_mean=(1.0 / (n + 1)) if i == j else 0.0,
    )


def default_tests(n: int) -> tuple[TestFunction, ...]:
    return tuple(coordinate_test(i) for i in range(n + 1))


def resolve_test(label: str, n: int) -> TestFunction:
    """Look up a named test function: ``x<i>`` or ``x<i>x<j>``."""
    parts = label.split("x")
    try:
        if len(parts) == 2 and parts[0] == "":
            i = int(parts[1])
            if 0 <= i <= n:
                return coordinate_test(i)
        elif len(parts) == 3 and parts[0] == "":
            i, j = int(parts[1]), int(parts[2])
            if 0 <= i <= n and 0 <= j <= n:
                return product_test(i, j, n)
    except ValueError:
        pass
    raise KeyError(f"unknown test function {label!r} for S^{n}; use x<i> or x<i>x<j> with indices in 0..{n}")


@dataclass(frozen=True)
class OccupationState:
    """Running occupation averages of a single trajectory."""

    t: float
    m: np.ndarray
    test_means: np.ndarray = field(default_factory=lambda: np.zeros(0))
    t_init: float = 1.0

    @classmethod
    def initial(cls, N: int, tests: Sequence[TestFunction] = (), t_init: float = 1.0) -> "OccupationState":
        """Warm-up state: the mass on [0, t_init] carries the uniform averages."""
        if t_init <= 0:
            raise ValueError("t_init must be positive")
        return cls(
            t=float(t_init),
            m=np.zeros(N),
            test_means=np.array([f.uniform_mean for f in tests], dtype=np.float64),
            t_init=float(t_init),
        )


def drift(state: OccupationState, x: SpherePoint, beta_t: float, features: FeatureMap) -> TangentVector:
    """Self-interaction drift ``-beta_t * grad_x (m_t . v(x))``."""
    if state.t <= 0:
        raise ValueError("drift requires positive elapsed time")
    if features.name == "identity":
        return project_to_tangent(x, -beta_t * state.m)
    acc = np.zeros(x.ambient_dim)
    for i in range(features.N):
        if state.m[i] != 0.0:
            acc += state.m[i] * features.gradient(x, i).components
    return TangentVector(x, -beta_t * acc)


def update_occupation(
    state: OccupationState,
    x_new: SpherePoint,
    h: float,
    features: FeatureMap,
    tests: Sequence[TestFunction] = (),
) -> OccupationState:
    """Advance the occupation averages by a step of length ``h`` ending at ``x_new``."""
    if h <= 0:
        raise ValueError("step size must be positive")
    t_new = state.t + h
    m_new = (state.t * state.m + h * features.evaluate(x_new)) / t_new
    if len(tests):
        fx = np.array([f(x_new.coords) for f in tests])
        means = (state.t * state.test_means + h * fx) / t_new
    else:
        means = state.test_means
    return replace(state, t=t_new, m=m_new, test_means=means)
