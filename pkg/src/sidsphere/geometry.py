"""Geometric primitives on the unit sphere S^n embedded in R^{n+1}.

Points and tangent vectors are small immutable wrappers around float64
arrays.  Every operation returning a point renormalizes it, so unit length
holds to rounding error even along very long trajectories.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNIT_TOL = 1e-12
TANGENT_TOL = 1e-10

# below this |w| the exponential map uses its second-order expansion
_SERIES_CUTOFF = 1e-7
_ZERO_CUTOFF = 1e-14


class DimensionError(ValueError):
    """Raised when vectors of incompatible ambient dimension are combined."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpherePoint:
    """A unit vector of R^{n+1}, i.e. a point of S^n."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if c.ndim != 1 or c.size < 2:
            raise DimensionError(f"need a 1-d vector with at least 2 entries, got shape {c.shape}")
        norm = np.linalg.norm(c)
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError("cannot place a zero or non-finite vector on the sphere")
        if abs(norm - 1.0) > UNIT_TOL:
            c = c / norm
        object.__setattr__(self, "coords", _frozen(c))

    @classmethod
    def from_ambient(cls, u) -> "SpherePoint":
        """Radially project a nonzero ambient vector onto the sphere."""
        u = np.asarray(u, dtype=np.float64)
        return cls(u / np.linalg.norm(u))

    @classmethod
    def basis(cls, i: int, dim: int) -> "SpherePoint":
        e = np.zeros(dim)
        e[i] = 1.0
        return cls(e)

    @property
    def n(self) -> int:
        """Intrinsic dimension of the sphere the point lives on."""
        return self.coords.size - 1

    @property
    def ambient_dim(self) -> int:
        return self.coords.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, SpherePoint):
            return NotImplemented
        return np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash(self.coords.tobytes())

    def __repr__(self):
        return f"SpherePoint({self.coords.tolist()})"


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A vector of R^{n+1} orthogonal to its base point."""

    base: SpherePoint
    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=np.float64)
        if c.shape != self.base.coords.shape:
            raise DimensionError(
                f"tangent components of shape {c.shape} do not match base of shape {self.base.coords.shape}"
            )
        if abs(np.dot(c, self.base.coords)) > TANGENT_TOL * max(1.0, float(np.linalg.norm(c))):
            raise ValueError("tangent vector has a radial component")
        object.__setattr__(self, "components", _frozen(c))

    def norm(self) -> float:
        return float(np.linalg.norm(self.components))

    def __add__(self, other: "TangentVector") -> "TangentVector":
        if not isinstance(other, TangentVector):
            return NotImplemented
        if other.base is not self.base and other.base != self.base:
            raise ValueError("cannot add tangent vectors at different base points")
        return TangentVector(self.base, self.components + other.components)

    def __mul__(self, s: float) -> "TangentVector":
        return TangentVector(self.base, float(s) * self.components)

    __rmul__ = __mul__

    def __neg__(self) -> "TangentVector":
        return TangentVector(self.base, -self.components)

    def __repr__(self):
        return f"TangentVector(base={self.base.coords.tolist()}, components={self.components.tolist()})"


def project_to_tangent(x: SpherePoint, u) -> TangentVector:
    """Orthogonal projection ``u - (u.x) x`` of an ambient vector onto T_x S^n."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != x.coords.shape:
        raise DimensionError(f"vector of shape {u.shape} does not match point of shape {x.coords.shape}")
    return TangentVector(x, u - np.dot(u, x.coords) * x.coords)


def exp_map(x: SpherePoint, w: TangentVector) -> SpherePoint:
    """Follow the great circle from ``x`` with initial velocity ``w`` for unit time."""
    if w.components.shape != x.coords.shape:
        raise DimensionError("tangent vector and point have different ambient dimension")
    s = np.linalg.norm(w.components)
    if s < _ZERO_CUTOFF:
        return x
    if s < _SERIES_CUTOFF:
        y = x.coords + w.components - (0.5 * s * s) * x.coords
    else:
        y = np.cos(s) * x.coords + (np.sin(s) / s) * w.components
    return SpherePoint(y / np.linalg.norm(y))


def coordinate_surface_gradient(x: SpherePoint, i: int) -> TangentVector:
    """Surface gradient of the coordinate function ``y -> y_i`` at ``x``."""
    d = x.ambient_dim
    if not 0 <= i < d:
        raise IndexError(f"coordinate index {i} out of range for ambient dimension {d}")
    e = np.zeros(d)
    e[i] = 1.0
    return project_to_tangent(x, e)


def geodesic_distance(x: SpherePoint, y: SpherePoint) -> float:
    c = float(np.clip(np.dot(x.coords, y.coords), -1.0, 1.0))
    return float(np.arccos(c))


def uniform_points(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Draw ``count`` uniform points on S^{dim-1} as rows of an array."""
    g = rng.standard_normal((count, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)
