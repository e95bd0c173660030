import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neutral_tci.pathspace import (ConfigError, DomainError, PathMetric, SegmentPath, ShapeError, TimeGrid,
                                   distance, segment_at)

from conftest import path_from


def test_grid_counts():
    g = TimeGrid(0.5, 2.0, 0.125)
    assert g.m == 4
    assert g.n_steps == 16
    assert g.n_points == 21
    assert g.times[0] == -0.5 and g.times[g.m] == 0.0 and g.times[-1] == 2.0


@pytest.mark.parametrize("tau,T,dt", [(0.25, 1.0, 0.1), (1.0, 0.3, 0.25), (0.0, 1.0, 0.1), (1.0, 1.0, -0.5)])
def test_grid_rejects_incommensurate(tau, T, dt):
    with pytest.raises(ValueError):
        TimeGrid(tau, T, dt)


def test_segment_of_constant_path():
    g = TimeGrid(0.5, 1.0, 0.125)
    p = path_from(g, lambda s: 3.0)
    view = segment_at(p, 0.3)
    for th in (-0.5, -0.21, 0.0):
        assert view(th)[0] == 3.0


def test_segment_of_identity_path_at_zero():
    g = TimeGrid(1.0, 1.0, 0.0625)
    p = path_from(g, lambda s: s)
    view = segment_at(p, 0.0)
    for th in np.linspace(-1.0, 0.0, 17):
        assert view(th)[0] == pytest.approx(th, abs=1e-15)
    assert view(-0.3)[0] == pytest.approx(-0.3, abs=1e-14)


def test_segment_midpoint_interpolation():
    g = TimeGrid(0.5, 1.0, 0.5)
    vals = np.array([[0.0], [1.0], [1.0], [1.0]])
    p = SegmentPath(g, vals)
    assert segment_at(p, 0.0)(-0.25)[0] == pytest.approx(0.5)
    # t between grid points shifts the window
    assert segment_at(p, 0.25)(-0.5)[0] == pytest.approx(0.5)


def test_segment_grid_aligned_is_exact(rng):
    g = TimeGrid(0.25, 1.0, 1 / 64)
    p = SegmentPath(g, rng.normal(size=(g.n_points, 2)))
    t = 0.5
    view = segment_at(p, t)
    i0 = g.index_of(t) - g.m
    for j in range(g.m + 1):
        assert np.array_equal(view(-g.tau + j * g.dt), p.values[i0 + j])


@pytest.mark.parametrize("t", [-0.01, 1.0001])
def test_segment_outside_horizon(t):
    g = TimeGrid(0.5, 1.0, 0.125)
    with pytest.raises(DomainError):
        segment_at(path_from(g, lambda s: 0.0), t)


def test_distance_unit_step():
    g = TimeGrid(0.25, 1.0, 1 / 64)
    a, b = path_from(g, lambda s: 0.0), path_from(g, lambda s: 1.0)
    for kind in PathMetric:
        assert distance(a, b, kind) == pytest.approx(1.0, abs=1e-14)
        assert distance(a, a, kind) == 0.0


def test_distance_linear_ramp():
    dt = 1 / 256
    g = TimeGrid(0.25, 2.0, dt)
    a, b = path_from(g, lambda s: 0.0), path_from(g, lambda s: s)
    assert distance(a, b, "inf1") == pytest.approx(math.sqrt(5.0), abs=1e-14)
    assert distance(a, b, "inf2") == pytest.approx(2.0, abs=1e-14)
    # composite trapezoid on t^2 over [0, 2] overshoots by exactly dt^2 / 3
    assert distance(a, b, "l2") ** 2 == pytest.approx(8.0 / 3.0 + dt**2 / 3.0, abs=1e-12)
    assert distance(a, b, "l2") == pytest.approx(math.sqrt(8.0 / 3.0), abs=1e-5)


def test_distance_excludes_initial_segment():
    g = TimeGrid(0.5, 1.0, 0.125)
    a = path_from(g, lambda s: 0.0)
    b = path_from(g, lambda s: 5.0 if s < 0 else 0.0)
    for kind in PathMetric:
        assert distance(a, b, kind) == 0.0


def test_distance_errors():
    g = TimeGrid(0.5, 1.5, 0.125)
    a = path_from(g, lambda s: 0.0)
    with pytest.raises(ConfigError):
        distance(a, a, "inf1")
    other = path_from(TimeGrid(0.5, 1.5, 0.25), lambda s: 0.0)
    with pytest.raises(ShapeError):
        distance(a, other, "inf2")


def test_metric_aliases():
    assert PathMetric.parse("dL2") is PathMetric.L2_IN_TIME
    assert PathMetric.parse("inf2") is PathMetric.UNIFORM_SUP
    with pytest.raises(ValueError):
        PathMetric.parse("w1")


GRID = TimeGrid(0.25, 2.0, 1 / 16)

paths = st.lists(st.floats(-10, 10, allow_nan=False), min_size=GRID.n_points * 2,
                 max_size=GRID.n_points * 2).map(lambda v: SegmentPath(GRID, np.reshape(v, (GRID.n_points, 2))))


@given(paths, paths, paths)
def test_metric_axioms(a, b, c):
    for kind in PathMetric:
        dab, dba = distance(a, b, kind), distance(b, a, kind)
        assert dab >= 0.0
        assert dab == dba
        slack = 1e-12 * (1 + dab) if kind is PathMetric.L2_IN_TIME else 1e-12
        assert dab <= distance(a, c, kind) + distance(c, b, kind) + slack


@given(paths, paths)
def test_metric_ordering(a, b):
    N, T = 2, 2.0
    d1, d2, dl = (distance(a, b, k) for k in ("inf1", "inf2", "l2"))
    assert d2 <= d1 * (1 + 1e-15)
    assert d1 <= math.sqrt(N) * d2 * (1 + 1e-15)
    assert dl <= math.sqrt(T) * d2 * (1 + 1e-15)


@given(paths, paths, st.floats(-5, 5))
def test_metric_translation_invariance(a, b, shift):
    a2 = SegmentPath(GRID, a.values + shift)
    b2 = SegmentPath(GRID, b.values + shift)
    for kind in PathMetric:
        assert distance(a2, b2, kind) == pytest.approx(distance(a, b, kind), rel=1e-12, abs=1e-12)
