"""Uniform time grids, paths on [-tau, T], segment views and path-space metrics."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class ShapeError(ValueError):
    """Paths or arrays with incompatible grids/dimensions."""


class ConfigError(ValueError):
    """Inconsistent configuration (grid, metric or model parameters)."""


def _is_multiple(x: float, dt: float) -> int | None:
    k = round(x / dt)
    if k > 0 and abs(k * dt - x) <= 1e-12 * max(1.0, abs(x)):
        return int(k)
    return None


@dataclass(frozen=True)
class TimeGrid:
    """Grid t_i = -tau + i*dt with tau = m*dt and T an integer multiple of dt."""

    tau: float
    horizon: float
    dt: float
    m: int = field(init=False)
    n_steps: int = field(init=False)

    def __post_init__(self):
        if not (self.tau > 0 and self.horizon > 0 and self.dt > 0):
            raise ConfigError("tau, horizon and dt must be positive")
        m = _is_multiple(self.tau, self.dt)
        if m is None:
            raise ConfigError(f"dt={self.dt} does not divide tau={self.tau}")
        n = _is_multiple(self.horizon, self.dt)
        if n is None:
            raise ConfigError(f"horizon={self.horizon} is not a multiple of dt={self.dt}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "n_steps", n)

    @classmethod
    def from_steps(cls, tau: float, horizon: float, steps_per_unit: int) -> "TimeGrid":
        return cls(tau, horizon, 1.0 / steps_per_unit)

    @property
    def n_points(self) -> int:
        return self.m + self.n_steps + 1

    @property
    def times(self) -> np.ndarray:
        return -self.tau + self.dt * np.arange(self.n_points)

    def index_of(self, t: float) -> int:
        """Grid index of time t (t must be grid aligned)."""
        k = (t + self.tau) / self.dt
        i = round(k)
        if abs(i - k) > 1e-9:
            raise DomainError(f"t={t} is not a grid point")
        return int(i)

    def is_integer_horizon(self) -> bool:
        return abs(self.horizon - round(self.horizon)) <= 1e-12 and round(self.horizon) >= 1


class Segment:
    """A segment X_t on [-tau, 0] sampled at the delay grid theta_j = -tau + j*dt.

    `values` has shape (m+1, n); values[-1] is the current state X(t) and
    values[0] is X(t - tau).  Between grid points the segment is linear.
    """

    __slots__ = ("values", "tau", "dt")

    def __init__(self, values: np.ndarray, tau: float, dt: float):
        self.values = values
        self.tau = tau
        self.dt = dt

    @property
    def m(self) -> int:
        return self.values.shape[0] - 1

    @property
    def now(self) -> np.ndarray:
        return self.values[-1]

    @property
    def oldest(self) -> np.ndarray:
        return self.values[0]

    @property
    def theta(self) -> np.ndarray:
        return -self.tau + self.dt * np.arange(self.values.shape[0])

    def __call__(self, theta: float) -> np.ndarray:
        if theta < -self.tau - 1e-12 or theta > 1e-12:
            raise DomainError(f"theta={theta} outside [-tau, 0]")
        s = (theta + self.tau) / self.dt
        j = min(int(math.floor(s)), self.m - 1) if self.m > 0 else 0
        j = max(j, 0)
        frac = s - j
        if frac <= 0.0 or self.m == 0:
            return self.values[j].copy()
        return (1.0 - frac) * self.values[j] + frac * self.values[j + 1]

    def sup_norm(self) -> float:
        return float(np.sqrt(np.max(np.sum(self.values**2, axis=-1))))

    def integral_sq(self) -> float:
        """Unweighted trapezoid integral of |X(theta)|^2 over [-tau, 0]."""
        return float(np.trapezoid(np.sum(self.values**2, axis=-1), dx=self.dt))

    def mean(self) -> np.ndarray:
        """Trapezoid average (1/tau) * integral of X(theta)."""
        v = self.values
        if v.shape[0] == 1:
            return v[0].copy()
        s = v[1:-1].sum(axis=0) + 0.5 * (v[0] + v[-1])
        return s * (self.dt / self.tau)

    def __sub__(self, other: "Segment") -> "Segment":
        return Segment(self.values - other.values, self.tau, self.dt)


@dataclass(frozen=True)
class SegmentPath:
    """A trajectory stored at the grid points of `grid`; values shape (n_points, dim)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.n_points:
            raise ShapeError(f"expected {self.grid.n_points} grid values, got {v.shape[0]}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def forward(self) -> np.ndarray:
        """Values on [0, T]."""
        return self.values[self.grid.m:]

    def segment(self, i: int) -> Segment:
        """Segment at grid time t_{m+i} = i*dt (i counts steps from 0)."""
        return Segment(self.values[i: i + self.grid.m + 1], self.grid.tau, self.grid.dt)


def segment_at(path: SegmentPath, t: float):
    """Segment view X_t: theta -> X(t + theta) with linear interpolation."""
    g = path.grid
    if t < -1e-12 or t > g.horizon + 1e-12:
        raise DomainError(f"t={t} outside [0, {g.horizon}]")
    vals = path.values
    last = vals.shape[0] - 1

    def view(theta):
        th = np.asarray(theta, dtype=float)
        if np.any(th < -g.tau - 1e-12) or np.any(th > 1e-12):
            raise DomainError("theta outside [-tau, 0]")
        # fractional grid index, snapped so grid-aligned queries hit stored values exactly
        s = (t + th + g.tau) / g.dt
        near = np.round(s)
        s = np.where(np.abs(s - near) <= 1e-9, near, s)
        s = np.clip(s, 0, last)
        j = np.minimum(np.floor(s).astype(int), last - 1 if last > 0 else 0)
        frac = (s - j)[..., None]
        upper = vals[np.minimum(j + 1, last)]
        out = np.where(frac == 0.0, vals[j], (1.0 - frac) * vals[j] + frac * upper)
        return out

    return view


class PathMetric(str, enum.Enum):
    SUM_SUP_SQUARES = "inf1"
    UNIFORM_SUP = "inf2"
    L2_IN_TIME = "l2"

    @classmethod
    def parse(cls, name: "str | PathMetric") -> "PathMetric":
        if isinstance(name, PathMetric):
            return name
        aliases = {
            "inf1": cls.SUM_SUP_SQUARES, "d_inf1": cls.SUM_SUP_SQUARES, "sum_sup_squares": cls.SUM_SUP_SQUARES,
            "inf2": cls.UNIFORM_SUP, "d_inf2": cls.UNIFORM_SUP, "uniform": cls.UNIFORM_SUP, "sup": cls.UNIFORM_SUP,
            "l2": cls.L2_IN_TIME, "d_l2": cls.L2_IN_TIME, "dl2": cls.L2_IN_TIME,
            "dinf1": cls.SUM_SUP_SQUARES, "dinf2": cls.UNIFORM_SUP,
        }
        try:
            return aliases[str(name).lower()]
        except KeyError:
            raise ConfigError(f"unknown metric {name!r}; expected one of inf1, inf2, l2") from None


def squared_distance_from_diff(diff: np.ndarray, grid: TimeGrid, kind: PathMetric) -> float:
    """d^2 for a difference path sampled on [0, T] (shape (n_steps+1, dim))."""
    sq = np.sum(diff * diff, axis=-1)
    if kind is PathMetric.UNIFORM_SUP:
        return float(np.max(sq))
    if kind is PathMetric.L2_IN_TIME:
        return float(np.trapezoid(sq, dx=grid.dt))
    if not grid.is_integer_horizon():
        raise ConfigError("sum-of-sup-squares metric needs an integer horizon T = N")
    n_unit = _is_multiple(1.0, grid.dt)
    if n_unit is None:
        raise ConfigError("dt must divide 1 for the sum-of-sup-squares metric")
    total = 0.0
    for k in range(int(round(grid.horizon))):
        total += float(np.max(sq[k * n_unit: (k + 1) * n_unit + 1]))
    return total


def distance(a: SegmentPath, b: SegmentPath, kind: "PathMetric | str") -> float:
    """Distance between two paths over [0, T]; sups are taken over grid points."""
    kind = PathMetric.parse(kind)
    if a.grid != b.grid or a.values.shape != b.values.shape:
        raise ShapeError("paths must share grid and dimension")
    return math.sqrt(squared_distance_from_diff(a.forward - b.forward, a.grid, kind))
