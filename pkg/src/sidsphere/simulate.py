"""Time stepping for self-interacting diffusions on S^n.

One step draws isotropic ambient noise, projects it onto the tangent space
at the current point, adds the interaction drift and follows the great
circle through the resulting tangent vector.  The noise carries the factor
sqrt(2), i.e. the generator of the free motion is the full Laplacian.

Long runs go through a compiled kernel that consumes noise drawn in blocks
from a numpy Generator, in the same order as repeated calls of
:func:`em_step`, so both routes follow the same path up to rounding.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .geometry import SpherePoint, TangentVector, exp_map, project_to_tangent
from .interaction import (
    FeatureMap,
    OccupationState,
    TestFunction,
    default_tests,
    drift,
    identity_features,
    resolve_test,
    update_occupation,
)
from .schedules import BetaSchedule, beta_value

DEFAULT_H0 = 1e-2
DEFAULT_T_INIT = 1.0
DEFAULT_RATIO = 10.0 ** (1.0 / 8.0)
DOUBLING_START = 1e3
NOISE_BLOCK = 1 << 16


class TrajectoryAborted(RuntimeError):
    """A step produced a non-finite value."""


@dataclass(frozen=True)
class SimConfig:
    """Everything that determines a trajectory, seed included.

    ``start=None`` draws the initial point uniformly from the seeded stream.
    ``step_mode="doubling"`` doubles the step each time t crosses
    ``1e3 * 2^j``, never beyond ``h_max``.
    """

    n: int
    schedule: BetaSchedule
    T: float
    seed: int = 0
    h0: float = DEFAULT_H0
    t_init: float = DEFAULT_T_INIT
    step_mode: str = "fixed"
    h_max: float = 0.08
    checkpoint_ratio: float = DEFAULT_RATIO
    start: Optional[tuple[float, ...]] = None
    tests: tuple[TestFunction, ...] = ()

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"sphere dimension n must be a positive integer, got {self.n}")
        if not self.h0 > 0:
            raise ValueError(f"h0 must be positive, got {self.h0}")
        if not self.t_init > 0:
            raise ValueError(f"t_init must be positive, got {self.t_init}")
        if not self.T >= self.t_init:
            raise ValueError(f"horizon T={self.T} must not precede t_init={self.t_init}")
        if self.step_mode not in ("fixed", "doubling"):
            raise ValueError(f"step_mode must be 'fixed' or 'doubling', got {self.step_mode!r}")
        if self.step_mode == "doubling" and self.h_max < self.h0:
            raise ValueError("h_max must be at least h0")
        if not self.checkpoint_ratio > 1.0:
            raise ValueError("checkpoint_ratio must exceed 1 for a strictly increasing grid")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.start is not None:
            start = tuple(float(c) for c in self.start)
            if len(start) != self.n + 1:
                raise ValueError(f"start point needs {self.n + 1} coordinates")
            object.__setattr__(self, "start", tuple(SpherePoint(start).coords.tolist()))
        if not self.tests:
            object.__setattr__(self, "tests", default_tests(self.n))

    @property
    def dim(self) -> int:
        return self.n + 1

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "schedule": self.schedule.to_dict(),
            "T": self.T,
            "seed": self.seed,
            "h0": self.h0,
            "t_init": self.t_init,
            "step_mode": self.step_mode,
            "h_max": self.h_max,
            "checkpoint_ratio": self.checkpoint_ratio,
            "start": "uniform" if self.start is None else list(self.start),
            "tests": [f.label for f in self.tests],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        d["schedule"] = BetaSchedule(**d["schedule"])
        start = d.get("start", "uniform")
        d["start"] = None if start in (None, "uniform") else tuple(start)
        labels = d.pop("tests", None)
        cfg = cls(**d)
        if labels:
            cfg = replace(cfg, tests=tuple(resolve_test(lbl, cfg.n) for lbl in labels))
        return cfg

    def config_hash(self) -> str:
        return hash_dict(self.to_dict())


def hash_dict(d: dict) -> str:
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


@dataclass
class TrajectoryRecord:
    """Checkpointed history of one trajectory.

    Row k of ``m``, ``test_means`` and ``x`` holds the state at ``times[k]``.
    """

    config: SimConfig
    times: np.ndarray
    m: np.ndarray
    test_means: np.ndarray
    x: np.ndarray
    test_labels: tuple[str, ...]
    failed: bool = False
    message: str = ""

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def terminal(self) -> OccupationState:
        return OccupationState(t=float(self.times[-1]), m=self.m[-1].copy(),
                               test_means=self.test_means[-1].copy(), t_init=self.config.t_init)

    @property
    def terminal_point(self) -> SpherePoint:
        return SpherePoint(self.x[-1])

    def series(self, label: str) -> np.ndarray:
        """Running mean of a registered test function, or ``|m|`` for ``m_norm``."""
        if label == "m_norm":
            return np.linalg.norm(self.m, axis=1)
        if label in self.test_labels:
            return self.test_means[:, self.test_labels.index(label)]
        if label.startswith("m") and label[1:].isdigit() and int(label[1:]) < self.m.shape[1]:
            return self.m[:, int(label[1:])]
        raise KeyError(f"record has no series {label!r}; available: {list(self.test_labels)} and m_norm")

    def uniform_mean(self, label: str) -> float:
        for f in self.config.tests:
            if f.label == label:
                return f.uniform_mean
        return 0.0

    def checkpoint_index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))


# ---------------------------------------------------------------------------
# single steps


def em_step(
    x: SpherePoint,
    state: OccupationState,
    schedule: BetaSchedule,
    h: float,
    rng: np.random.Generator,
    features: Optional[FeatureMap] = None,
) -> SpherePoint:
    """One geodesic Euler-Maruyama step of length ``h``."""
    if h < 0:
        raise ValueError("step size must be nonnegative")
    if h == 0:
        return x
    if state.t < state.t_init:
        raise ValueError("state time precedes the warm-up origin")
    features = features or identity_features(x.n)
    xi = rng.standard_normal(x.ambient_dim)
    noise = project_to_tangent(x, math.sqrt(2.0 * h) * xi)
    dr = drift(state, x, schedule(state.t), features)
    w = noise + h * dr
    if not np.all(np.isfinite(w.components)):
        raise TrajectoryAborted(f"non-finite increment at t={state.t}")
    return exp_map(x, w)


@njit(cache=True, nogil=True)
def _advance(x, m, t0, h, n_steps, noise, kind, b, pos_out, record_pos):
    """Advance ``x`` and ``m`` in place; returns the number of steps completed."""
    d = x.shape[0]
    sq = math.sqrt(2.0 * h)
    w = np.empty(d)
    for k in range(n_steps):
        t = t0 + k * h
        beta = beta_value(kind, b, t)
        xn = 0.0
        mx = 0.0
        for i in range(d):
            xn += noise[k, i] * x[i]
            mx += m[i] * x[i]
        s2 = 0.0
        for i in range(d):
            w[i] = sq * (noise[k, i] - xn * x[i]) - h * beta * (m[i] - mx * x[i])
            s2 += w[i] * w[i]
        s = math.sqrt(s2)
        if not math.isfinite(s):
            return k
        if s >= 1e-14:
            if s < 1e-7:
                c = 1.0 - 0.5 * s2
                for i in range(d):
                    x[i] = c * x[i] + w[i]
            else:
                c = math.cos(s)
                sn = math.sin(s) / s
                for i in range(d):
                    x[i] = c * x[i] + sn * w[i]
            nrm = 0.0
            for i in range(d):
                nrm += x[i] * x[i]
            nrm = math.sqrt(nrm)
            for i in range(d):
                x[i] /= nrm
        t_new = t0 + (k + 1) * h
        for i in range(d):
            m[i] = (t * m[i] + h * x[i]) / t_new
        if record_pos:
            for i in range(d):
                pos_out[k, i] = x[i]
    return n_steps


# ---------------------------------------------------------------------------
# trajectories


def checkpoint_grid(t_init: float, T: float, ratio: float) -> np.ndarray:
    """Nominal checkpoint times ``t_init * ratio^k`` capped by ``T`` (included)."""
    if T <= t_init:
        return np.array([t_init])
    kmax = int(math.floor(math.log(T / t_init) / math.log(ratio) + 1e-12))
    grid = t_init * ratio ** np.arange(kmax + 1)
    grid = grid[grid < T * (1 - 1e-12)]
    return np.append(grid, T)


def _step_at(config: SimConfig, t: float) -> float:
    if config.step_mode == "fixed" or t < DOUBLING_START:
        return config.h0
    q = int(math.floor(math.log2(t / DOUBLING_START) + 1e-12)) + 1
    return min(config.h0 * 2.0**q, config.h_max)


def step_plan(config: SimConfig) -> list[tuple[float, float, int, bool]]:
    """Segments ``(t_start, h, n_steps, ends_at_checkpoint)`` covering [t_init, T]."""
    targets = [(float(t), True) for t in checkpoint_grid(config.t_init, config.T, config.checkpoint_ratio)[1:]]
    if config.step_mode == "doubling":
        bp = DOUBLING_START
        while bp < config.T and config.h0 * 2.0 ** round(math.log2(bp / DOUBLING_START)) < config.h_max:
            if bp > config.t_init:
                targets.append((bp, False))
            bp *= 2.0
    targets.sort()
    plan = []
    tc = config.t_init
    for target, is_cp in targets:
        h = _step_at(config, tc)
        n = max(int(round((target - tc) / h)), 0)
        if n == 0 and not is_cp:
            continue
        plan.append((tc, h, n, is_cp))
        tc = tc + n * h
    return plan


def _initial_point(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    if config.start is not None:
        return np.array(config.start, dtype=np.float64)
    g = rng.standard_normal(config.dim)
    return g / np.linalg.norm(g)


def run_trajectory(config: SimConfig, block: int = NOISE_BLOCK) -> TrajectoryRecord:
    """Simulate one trajectory from ``t_init`` to ``T``; deterministic in ``config``."""
    rng = make_rng(config.seed)
    d = config.dim
    x = _initial_point(config, rng)
    m = np.zeros(d)
    tests = config.tests
    coord_idx = [f.coordinate for f in tests]
    general = [j for j, c in enumerate(coord_idx) if c is None]
    means = np.array([f.uniform_mean for f in tests], dtype=np.float64)
    code, b = config.schedule.code, float(config.schedule.b)

    def snapshot(t):
        row = means.copy()
        for j, c in enumerate(coord_idx):
            if c is not None:
                row[j] = m[c]
        return t, m.copy(), row, x.copy()

    rows = [snapshot(config.t_init)]
    failed, message = False, ""
    pos = np.empty((block, d)) if general else np.empty((1, d))
    for t_start, h, n_steps, is_cp in step_plan(config):
        done = 0
        while done < n_steps:
            k = min(block, n_steps - done)
            noise = rng.standard_normal((k, d))
            t0 = t_start + done * h
            got = _advance(x, m, t0, h, k, noise, code, b, pos, bool(general))
            if general and got:
                vals = np.stack([tests[j].func(pos[:got]) for j in general])
                t1 = t0 + got * h
                means[general] = (t0 * means[general] + h * vals.sum(axis=1)) / t1
            done += got
            if got < k:
                failed = True
                message = f"non-finite increment at t={t0 + got * h!r}"
                break
        if failed:
            rows.append(snapshot(t_start + done * h))
            break
        if is_cp and n_steps > 0:
            rows.append(snapshot(t_start + n_steps * h))

    times = np.array([r[0] for r in rows])
    return TrajectoryRecord(
        config=config,
        times=times,
        m=np.array([r[1] for r in rows]),
        test_means=np.array([r[2] for r in rows]).reshape(len(rows), len(tests)),
        x=np.array([r[3] for r in rows]),
        test_labels=tuple(f.label for f in tests),
        failed=failed,
        message=message,
    )


def resolve_threads(threads: Optional[int] = None) -> int:
    """Worker count: explicit value, else ``SID_SPHERE_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("SID_SPHERE_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("thread count must be at least 1")
    return threads


def run_ensemble(config: SimConfig, n_seeds: int, threads: Optional[int] = None) -> list[TrajectoryRecord]:
    """Run ``n_seeds`` independent trajectories with seeds ``seed + k``.

    Failed trajectories stay in the list with ``failed=True``.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")
    configs = [config.with_seed((config.seed + k) % 2**64) for k in range(n_seeds)]
    workers = min(resolve_threads(threads), n_seeds)
    if workers == 1:
        return [run_trajectory(c) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_trajectory, configs))


def reference_trajectory(config: SimConfig, n_steps: int, features: Optional[FeatureMap] = None):
    """Step-by-step pure-Python path with fixed ``h0``, for cross-checking the kernel.

    Returns the list of visited points and the final occupation state.
    """
    rng = make_rng(config.seed)
    features = features or identity_features(config.n)
    x = SpherePoint(_initial_point(config, rng))
    state = OccupationState.initial(features.N, config.tests, config.t_init)
    visited = [x]
    for _ in range(n_steps):
        x = em_step(x, state, config.schedule, config.h0, rng, features)
        state = update_occupation(state, x, config.h0, features, config.tests)
        visited.append(x)
    return visited, state
