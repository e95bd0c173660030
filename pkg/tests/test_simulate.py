import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neutral_tci import builtins
from neutral_tci.builtins import ConstantMatrix, DelayPointG, LinearDrift, ZeroMap
from neutral_tci.model import DelayWeight, NeutralModel
from neutral_tci.pathspace import PathMetric, TimeGrid
from neutral_tci.simulate import (DivergenceError, EnsembleError, EnsembleJob, ExplicitNoise, NoisePlan,
                                  NumericalOverflowError, Perturbation, constant_perturbation,
                                  feedback_perturbation, run_ensemble, simulate, simulate_coupled,
                                  zero_perturbation)


def linear_model(rate=0.0, gain=None, sigma=0.0, tau=1.0):
    g = DelayPointG(gain) if gain else ZeroMap(1)
    return NeutralModel(dim=1, noise_dim=1, G=g, b=LinearDrift(rate), sigma=ConstantMatrix([[sigma]]),
                        kappa=gain**2 if gain else 0.0, lambda1=2 * rate, lambda2=0.0, lambda3=0.0, delta=1.0,
                        sigma_bound=abs(sigma), w1=DelayWeight.atom(tau), w2=DelayWeight.atom(tau),
                        g_zero=gain is None)


def test_noise_is_counter_based():
    a = NoisePlan(7, 3).standard_normals(100, 2)
    b = NoisePlan(7, 3).standard_normals(100, 2)
    c = NoisePlan(7, 4).standard_normals(100, 2)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    # a prefix of a longer draw equals the shorter draw
    assert np.array_equal(NoisePlan(7, 3).standard_normals(250, 2)[:100], a)
    inc = NoisePlan(7, 3).increments(100, 0.25, 2)
    assert np.allclose(inc, 0.5 * a)


def test_zero_dynamics_keep_constant():
    g = TimeGrid(1.0, 2.0, 1 / 32)
    p = simulate(linear_model(), 2.5, g, NoisePlan(0, 0))
    assert np.all(p.values == 2.5)


@pytest.mark.parametrize("steps", [64, 128, 256])
def test_linear_decay_matches_exponential(steps):
    dt = 1.0 / steps
    g = TimeGrid(1.0, 1.0, dt)
    p = simulate(linear_model(rate=1.0), 1.0, g, NoisePlan(0, 0))
    assert p.values[-1, 0] == pytest.approx((1 - dt) ** steps, rel=1e-12)
    assert abs(p.values[-1, 0] - math.exp(-1)) <= 2 * dt


def test_neutral_constant_fixed_point():
    tau = 0.25
    g = TimeGrid(tau, 5 * tau, tau / 16)
    model = linear_model(gain=0.5, tau=tau)
    p, stats = simulate(model, 1.0, g, NoisePlan(0, 0), return_stats=True)
    assert np.max(np.abs(p.values - 1.0)) <= 1e-12
    assert stats.max_residual <= 1e-12


def test_present_dependent_inversion_iteration_bound():
    # G = 0.5 * average over the segment includes the unknown endpoint
    model = builtins.weighted_neutral(tau=0.25, gain=0.5)
    g = TimeGrid(0.25, 1.0, 1 / 64)
    p, stats = simulate(model, 1.0, g, NoisePlan(2, 0), return_stats=True)
    assert stats.max_residual <= 1e-12
    k = model.kappa
    for it, r0 in zip(stats.iterations, stats.initial_residuals):
        if r0 > 1e-12:
            assert it <= math.ceil(math.log(1e-12 / r0) / math.log(k)) + 1


def test_inversion_failure_raises():
    model = builtins.weighted_neutral(tau=0.25, gain=0.5)
    g = TimeGrid(0.25, 0.5, 1 / 64)
    with pytest.raises(DivergenceError):
        simulate(model, 1.0, g, NoisePlan(0, 0), max_iter=1, fp_tol=0.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_overflow_raises():
    model = linear_model(rate=-1e200)
    with pytest.raises(NumericalOverflowError):
        simulate(model, 1.0, TimeGrid(1.0, 1.0, 0.25), NoisePlan(0, 0))


def test_zero_perturbation_gives_identical_paths():
    model = builtins.discrete_delay()
    g = TimeGrid(1.0, 2.0, 1 / 32)
    s = simulate_coupled(model, 0.3, zero_perturbation(1), g, NoisePlan(1, 9))
    assert s.energy == 0.0
    assert np.array_equal(s.x.values, s.y.values)
    assert np.all(s.m_path == 0.0)


@given(c=st.lists(st.floats(-3, 3), min_size=2, max_size=2), T=st.sampled_from([0.5, 1.0, 2.0]))
def test_constant_h_energy_exact(c, T):
    model = builtins.ou(tau=0.25, dim=2)
    g = TimeGrid(0.25, T, 1 / 64)
    s = simulate_coupled(model, 0.0, constant_perturbation(c), g, NoisePlan(0, 0))
    assert s.energy == pytest.approx((c[0] ** 2 + c[1] ** 2) * T, rel=1e-12, abs=1e-300)


def test_ou_difference_is_deterministic():
    model = builtins.ou(tau=0.25)
    dt = 1 / 128
    g = TimeGrid(0.25, 1.0, dt)
    k = np.arange(g.n_steps + 1)
    d_euler = 1.0 - (1.0 - dt) ** k        # Euler recursion D <- (1 - dt) D + dt
    for stream in range(5):
        s = simulate_coupled(model, 0.0, constant_perturbation(1.0), g, NoisePlan(3, stream))
        diff = (s.x.forward - s.y.forward)[:, 0]
        assert np.allclose(diff, d_euler, atol=1e-12)
        assert np.allclose(s.m_path[:, 0], d_euler, atol=1e-12)
    assert math.sqrt(s.squared_distance("inf2")) == pytest.approx(1 - math.exp(-1), abs=2 * dt)


def test_energy_cap_localizes():
    model = builtins.ou(tau=0.25)
    g = TimeGrid(0.25, 1.0, 1 / 64)
    h = feedback_perturbation([[-1.0]], energy_cap=0.5)
    s = simulate_coupled(model, 3.0, h, g, NoisePlan(0, 0))
    assert s.energy <= 0.5


def test_explicit_noise_matches_plan():
    model = builtins.ou(tau=0.25)
    g = TimeGrid(0.25, 1.0, 1 / 64)
    plan = NoisePlan(5, 2)
    dW = plan.increments(g.n_steps, g.dt, 1)
    a = simulate(model, 0.0, g, plan)
    b = simulate(model, 0.0, g, ExplicitNoise(dW))
    assert np.array_equal(a.values, b.values)


def _job(h=None, metrics=(PathMetric.L2_IN_TIME, PathMetric.UNIFORM_SUP)):
    model = builtins.discrete_delay(tau=0.5)
    return EnsembleJob(model, 0.5, h or feedback_perturbation([[-0.5]]), TimeGrid(0.5, 1.0, 1 / 32), metrics)


def test_singleton_ensemble_matches_direct_call():
    job = _job()
    ens = run_ensemble(job, 1, 42, workers=1, keep_paths=1)
    direct = simulate_coupled(job.model, job.xi, job.h, job.grid, NoisePlan(42, 0))
    assert ens.summaries[0].energy == direct.energy
    assert ens.summaries[0].d2[PathMetric.UNIFORM_SUP] == direct.squared_distance("inf2")
    assert np.array_equal(ens.kept[0].x.values, direct.x.values)


def test_ensemble_independent_of_workers():
    job = _job()
    a = run_ensemble(job, 40, 9, workers=1)
    b = run_ensemble(job, 40, 9, workers=8)
    assert [s.stream_id for s in b.summaries] == list(range(40))
    assert a.summaries == b.summaries


def test_zero_h_ensemble_has_zero_distances():
    job = _job(h=zero_perturbation(1))
    ens = run_ensemble(job, 12, 0, workers=2)
    assert np.all(ens.squared_distances("l2") == 0.0)
    assert np.all(ens.energies == 0.0)


def test_ensemble_error_reports_stream():
    class Boom:
        def __call__(self, t, seg):
            if seg.now[0] > 0.0:
                raise FloatingPointError("boom")
            return np.zeros(1)

    job = _job(h=Perturbation(Boom()))
    with pytest.raises(EnsembleError) as info:
        run_ensemble(job, 10, 0, workers=1)
    assert info.value.stream_id == 0
