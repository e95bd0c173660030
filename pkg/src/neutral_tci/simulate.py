"""Euler-Maruyama integration of neutral functional SDEs, the Girsanov-coupled
pair sharing one Brownian path, and reproducible Monte Carlo ensembles."""

from __future__ import annotations

import math
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import NeutralModel
from .pathspace import (
    PathMetric,
    Segment,
    SegmentPath,
    TimeGrid,
    squared_distance_from_diff,
)


class DivergenceError(RuntimeError):
    """Fixed-point inversion of the neutral relation did not converge."""


class NumericalOverflowError(FloatingPointError):
    pass


class EnsembleError(RuntimeError):
    def __init__(self, stream_id: int, cause: BaseException):
        super().__init__(f"trajectory {stream_id} failed: {cause!r}")
        self.stream_id = stream_id
        self.cause = cause


# ---------------------------------------------------------------------------
# noise

@dataclass(frozen=True)
class NoisePlan:
    """Counter-based Gaussian increments: row k is a pure function of
    (seed, stream_id, k).  Backed by a Philox generator keyed on (seed, stream)."""

    seed: int
    stream_id: int = 0

    def standard_normals(self, n_steps: int, dim: int) -> np.ndarray:
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_id & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key))
        return gen.standard_normal((n_steps, dim))

    def increments(self, n_steps: int, dt: float, dim: int) -> np.ndarray:
        return self.standard_normals(n_steps, dim) * math.sqrt(dt)


@dataclass(frozen=True)
class ExplicitNoise:
    """Caller-supplied Brownian increments (shape (n_steps, dim))."""

    dW: np.ndarray

    def increments(self, n_steps: int, dt: float, dim: int) -> np.ndarray:
        if self.dW.shape != (n_steps, dim):
            raise ValueError(f"expected increments of shape {(n_steps, dim)}, got {self.dW.shape}")
        return self.dW

    def standard_normals(self, n_steps: int, dim: int) -> np.ndarray:
        raise TypeError("explicit increments carry no standard-normal view")


# ---------------------------------------------------------------------------
# perturbations

@dataclass(frozen=True)
class Perturbation:
    """Girsanov drift h(t, X_t) in R^m, optionally localized so that the
    realized energy never exceeds ``energy_cap``."""

    h: Callable[[float, Segment], np.ndarray]
    energy_cap: float | None = None
    is_zero: bool = False

    def __call__(self, t: float, seg: Segment) -> np.ndarray:
        return self.h(t, seg)


class _Const:
    def __init__(self, c):
        self.c = np.atleast_1d(np.asarray(c, dtype=float))
        self.c.setflags(write=False)

    def __call__(self, t, seg):
        return self.c


class _Zero:
    def __init__(self, m):
        self.m = m

    def __call__(self, t, seg):
        return np.zeros(self.m)


class _Feedback:
    def __init__(self, gain):
        self.gain = np.atleast_2d(np.asarray(gain, dtype=float))

    def __call__(self, t, seg):
        return self.gain @ seg.now


def zero_perturbation(noise_dim: int) -> Perturbation:
    return Perturbation(_Zero(noise_dim), is_zero=True)


def constant_perturbation(c) -> Perturbation:
    return Perturbation(_Const(c))


def feedback_perturbation(gain, energy_cap: float | None = None) -> Perturbation:
    """h(t) = K X(t); unbounded, so an energy cap is usually wanted."""
    return Perturbation(_Feedback(gain), energy_cap=energy_cap)


# ---------------------------------------------------------------------------
# single path

@dataclass
class StepStats:
    max_residual: float = 0.0
    max_iterations: int = 0
    iterations: list[int] = field(default_factory=list)
    initial_residuals: list[float] = field(default_factory=list)


def initial_values(xi, grid: TimeGrid, dim: int) -> np.ndarray:
    """Initial segment on the delay grid from an array, a callable or a constant."""
    m = grid.m
    if isinstance(xi, Segment):
        vals = np.asarray(xi.values, float)
    elif isinstance(xi, SegmentPath):
        vals = np.asarray(xi.values[: m + 1], float)
    elif callable(xi):
        theta = -grid.tau + grid.dt * np.arange(m + 1)
        vals = np.array([np.atleast_1d(xi(th)) for th in theta], float)
    else:
        arr = np.asarray(xi, float)
        if arr.ndim <= 1 and arr.size in (1, dim):
            vals = np.broadcast_to(arr.reshape(1, -1) if arr.ndim else arr.reshape(1, 1), (m + 1, dim)).copy()
        else:
            vals = arr.reshape(m + 1, dim)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape != (m + 1, dim):
        raise ValueError(f"initial segment must have shape {(m + 1, dim)}, got {vals.shape}")
    return vals


def _integrate(model: NeutralModel, xi_vals: np.ndarray, grid: TimeGrid, dW: np.ndarray,
               h: Perturbation | None, fp_tol: float, max_iter: int, stats: StepStats | None):
    m, n_steps, dt, tau = grid.m, grid.n_steps, grid.dt, grid.tau
    n = model.dim
    vals = np.empty((grid.n_points, n))
    vals[: m + 1] = xi_vals
    z_path = np.empty((n_steps + 1, n))
    s = model.sign
    G, b, sigma = model.G, model.b, model.sigma
    use_h = h is not None and not h.is_zero
    cap = h.energy_cap if use_h else None
    energy_sum = 0.0
    g_zero, g_past = model.g_zero, model.g_strictly_past

    seg = Segment(vals[0: m + 1], tau, dt)
    z = seg.now - s * np.asarray(G(seg), float) if not g_zero else seg.now.copy()
    z_path[0] = z
    for i in range(n_steps):
        seg = Segment(vals[i: i + m + 1], tau, dt)
        drift = b(seg)
        sig = sigma(seg)
        if use_h:
            hv = h.h(i * dt, seg)
            e = float(hv @ hv)
            if cap is not None and (energy_sum + e) * dt > cap:
                hv = hv * 0.0
                e = 0.0
                cap = -1.0  # localized: h vanishes from here on
            energy_sum += e
            drift = drift + sig @ hv
        z = z + drift * dt + sig @ dW[i]
        z_path[i + 1] = z
        k = i + m + 1
        if g_zero:
            x = z
        elif g_past:
            vals[k] = vals[k - 1]
            x = z + s * np.asarray(G(Segment(vals[i + 1: k + 1], tau, dt)), float)
        else:
            new_seg = Segment(vals[i + 1: k + 1], tau, dt)
            x = vals[k - 1]
            it = 0
            r0 = None
            while True:
                vals[k] = x
                x_new = z + s * np.asarray(G(new_seg), float)
                diff = x_new - x
                r = math.sqrt(float(diff @ diff))
                if r0 is None:
                    r0 = r
                it += 1
                x = x_new
                if r <= fp_tol:
                    break
                if it >= max_iter:
                    raise DivergenceError(f"neutral inversion stalled at step {i} (residual {r:.3e})")
            if stats is not None:
                vals[k] = x
                res_vec = x - s * np.asarray(G(new_seg), float) - z
                res = math.sqrt(float(res_vec @ res_vec))
                stats.max_residual = max(stats.max_residual, res)
                stats.max_iterations = max(stats.max_iterations, it)
                stats.iterations.append(it)
                stats.initial_residuals.append(r0)
        vals[k] = x
        if not np.all(np.isfinite(x)):
            raise NumericalOverflowError(f"non-finite state at step {i}")
    return vals, z_path, energy_sum * dt


def simulate(model: NeutralModel, xi, grid: TimeGrid, noise, perturbation: Perturbation | None = None,
             fp_tol: float = 1e-12, max_iter: int = 100, return_stats: bool = False):
    """Euler-Maruyama path of d[X -+ G(X_t)] = [b + sigma h] dt + sigma dW.

    The auxiliary process Z = X -+ G(X_t) is stepped explicitly; X at the new
    grid point is then recovered from Z by contraction iteration through G.
    """
    xi_vals = initial_values(xi, grid, model.dim)
    dW = noise.increments(grid.n_steps, grid.dt, model.noise_dim)
    stats = StepStats() if return_stats else None
    vals, _, _ = _integrate(model, xi_vals, grid, dW, perturbation, fp_tol, max_iter, stats)
    path = SegmentPath(grid, vals)
    return (path, stats) if return_stats else path


@dataclass(frozen=True)
class CoupledSample:
    x: SegmentPath
    y: SegmentPath
    energy: float
    m_path: np.ndarray

    def squared_distance(self, kind) -> float:
        return squared_distance_from_diff(self.x.forward - self.y.forward, self.x.grid, PathMetric.parse(kind))


def simulate_coupled(model: NeutralModel, xi, h: Perturbation, grid: TimeGrid, noise,
                     fp_tol: float = 1e-12, max_iter: int = 100) -> CoupledSample:
    """X driven by b + sigma h and Y driven by b, both with the same increments."""
    xi_vals = initial_values(xi, grid, model.dim)
    dW = noise.increments(grid.n_steps, grid.dt, model.noise_dim)
    xv, zx, energy = _integrate(model, xi_vals, grid, dW, h, fp_tol, max_iter, None)
    yv, zy, _ = _integrate(model, xi_vals, grid, dW, None, fp_tol, max_iter, None)
    return CoupledSample(SegmentPath(grid, xv), SegmentPath(grid, yv), energy, zx - zy)


# ---------------------------------------------------------------------------
# ensembles

@dataclass(frozen=True)
class SampleSummary:
    stream_id: int
    energy: float
    d2: dict


@dataclass
class EnsembleResult:
    summaries: list[SampleSummary]
    metrics: tuple[PathMetric, ...]
    kept: list[CoupledSample] = field(default_factory=list)

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.summaries])

    def squared_distances(self, kind) -> np.ndarray:
        kind = PathMetric.parse(kind)
        return np.array([s.d2[kind] for s in self.summaries])


@dataclass(frozen=True)
class EnsembleJob:
    """Everything a worker needs to produce trajectory i from stream i."""

    model: NeutralModel
    xi: object
    h: Perturbation
    grid: TimeGrid
    metrics: tuple = (PathMetric.L2_IN_TIME,)
    fp_tol: float = 1e-12
    max_iter: int = 100

    def coupled(self, noise) -> CoupledSample:
        return simulate_coupled(self.model, self.xi, self.h, self.grid, noise, self.fp_tol, self.max_iter)


def _summarize(job, stream_id: int, sample) -> SampleSummary:
    return SampleSummary(stream_id, float(sample.energy),
                         {k: sample.squared_distance(k) for k in job.metrics})


def _run_block(job, seed: int, start: int, stop: int, keep: int):
    out, kept = [], []
    for i in range(start, stop):
        try:
            sample = job.coupled(NoisePlan(seed, i))
        except Exception as exc:  # noqa: BLE001 - re-raised with the stream id
            raise EnsembleError(i, exc) from exc
        out.append(_summarize(job, i, sample))
        if i < keep:
            kept.append(sample)
    return out, kept


_ACTIVE_JOB = None


def _worker_block(args):
    seed, start, stop, keep = args
    return _run_block(_ACTIVE_JOB, seed, start, stop, keep)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("NEUTRAL_TCI_WORKERS", "1")))
    except ValueError:
        return 1


def run_ensemble(job, n_paths: int, seed: int, workers: int | None = None, keep_paths: int = 0) -> EnsembleResult:
    """Simulate `n_paths` coupled trajectories; trajectory i uses stream i.

    Results are collected in ascending stream order, so the output does not
    depend on `workers`.  The first `keep_paths` coupled samples are retained.
    """
    global _ACTIVE_JOB
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    metrics = tuple(PathMetric.parse(k) for k in job.metrics)
    workers = default_workers() if workers is None else max(1, int(workers))
    workers = min(workers, n_paths)
    if workers == 1:
        summaries, kept = _run_block(job, seed, 0, n_paths, keep_paths)
        return EnsembleResult(summaries, metrics, kept)
    n_blocks = min(n_paths, 4 * workers)
    edges = np.linspace(0, n_paths, n_blocks + 1).astype(int)
    tasks = [(seed, int(a), int(b), keep_paths) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    _ACTIVE_JOB = job
    try:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            parts = list(pool.map(_worker_block, tasks))
    finally:
        _ACTIVE_JOB = None
    summaries, kept = [], []
    for s, k in parts:
        summaries.extend(s)
        kept.extend(k)
    return EnsembleResult(summaries, metrics, kept)


def simulate_many(model: NeutralModel, xi, grid: TimeGrid, seed: int, streams: Sequence[int],
                  perturbation: Perturbation | None = None) -> list[SegmentPath]:
    """Independent single paths on the given streams."""
    return [simulate(model, xi, grid, NoisePlan(seed, s), perturbation) for s in streams]
