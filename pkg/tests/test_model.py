import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neutral_tci import builtins
from neutral_tci.builtins import AverageG, ConstantMatrix, DelayPointG, LinearDrift, ZeroMap
from neutral_tci.model import DelayWeight, NeutralModel, audit_assumptions, default_sampler
from neutral_tci.pathspace import ConfigError, DomainError, Segment


def _sampler(model, tau=1.0, dt=1 / 16, seed=0):
    return default_sampler(model.dim, tau, dt, seed)


def test_delay_weight_mass_checked():
    with pytest.raises(ConfigError):
        DelayWeight(1.0, atoms=((-1.0, 0.5),))
    with pytest.raises(ConfigError):
        DelayWeight(1.0, density=lambda th: 2.0)
    w = DelayWeight(1.0, density=lambda th: 0.5, atoms=((-0.5, 0.5),))
    assert w.integrate(np.ones(17), 1 / 16) == pytest.approx(1.0, abs=1e-12)


def test_delay_weight_atom_picks_value():
    w = DelayWeight.atom(1.0)
    vals = np.arange(17.0)
    assert w.integrate(vals, 1 / 16) == 0.0
    assert DelayWeight.atom(1.0, -0.5).integrate(vals, 1 / 16) == 8.0
    assert DelayWeight.uniform(1.0).integrate(np.full(17, 3.0), 1 / 16) == pytest.approx(3.0, abs=1e-13)


def test_kappa_domain():
    with pytest.raises(DomainError):
        NeutralModel(dim=1, noise_dim=1, G=DelayPointG(0.5), b=LinearDrift(1.0), sigma=ConstantMatrix([[1.0]]),
                     kappa=1.0, lambda1=1, lambda2=0, lambda3=0, delta=1, sigma_bound=1,
                     w1=DelayWeight.atom(1.0), w2=DelayWeight.atom(1.0))


def test_point_delay_contraction_uniform_mode():
    model = NeutralModel(dim=1, noise_dim=1, G=DelayPointG(0.5), b=LinearDrift(1.0), sigma=ConstantMatrix([[1.0]]),
                         kappa=0.5, lambda1=3.0, lambda2=1.0, lambda3=0.0, delta=1.0, sigma_bound=1.0,
                         norm_mode="uniform", g_strictly_past=True)
    rep = audit_assumptions(model, _sampler(model), 600)
    assert rep.conditions["g_contraction"].passed
    assert rep.conditions["g_contraction"].worst_ratio <= 1.0
    assert rep.conditions["g_contraction"].n_samples == 600


def test_average_contraction_weighted_mode():
    model = builtins.weighted_neutral(tau=1.0, gain=0.5)
    assert model.kappa == 0.25
    rep = audit_assumptions(model, _sampler(model), 600)
    assert rep.conditions["g_contraction"].passed


def test_young_monotonicity_with_atom():
    model = NeutralModel(dim=1, noise_dim=1, G=ZeroMap(1), b=LinearDrift(3.0, 1.0), sigma=ConstantMatrix([[1.0]]),
                         kappa=0.0, lambda1=5.0, lambda2=1.0, lambda3=0.0, delta=10.0, sigma_bound=1.0,
                         w1=DelayWeight.atom(1.0), w2=DelayWeight.atom(1.0), g_zero=True)
    rep = audit_assumptions(model, _sampler(model), 900)
    assert rep.conditions["monotonicity"].passed
    assert rep.gating_passed


def test_audit_detects_understated_kappa():
    model = dataclasses.replace(builtins.weighted_neutral(gain=0.5), kappa=0.2)
    rep = audit_assumptions(model, _sampler(model), 300)
    assert not rep.conditions["g_contraction"].passed
    assert "g_contraction" in rep.failed()
    assert rep.conditions["g_contraction"].worst_ratio > 1.0


def test_zero_rhs_with_positive_lhs_is_infinite():
    # sigma varies with the state but lambda3 = 0 is declared
    class StateSigma:
        def __call__(self, seg):
            return np.array([[1.0 + 0.1 * math.tanh(seg.now[0])]])

    model = dataclasses.replace(builtins.ou(tau=1.0), sigma=StateSigma(), sigma_bound=1.2)
    rep = audit_assumptions(model, _sampler(model), 30)
    assert rep.conditions["sigma_lipschitz"].worst_ratio == math.inf
    assert not rep.passed


def test_nonzero_g_at_origin_fails():
    class Shifted:
        def __call__(self, seg):
            return 0.1 + 0.5 * seg.oldest

    model = dataclasses.replace(builtins.discrete_delay(), G=Shifted())
    rep = audit_assumptions(model, _sampler(model), 10)
    assert not rep.conditions["g_zero"].passed


def test_audit_deterministic_given_seed():
    model = builtins.discrete_delay()
    a = audit_assumptions(model, _sampler(model, seed=4), 200).to_dict()
    b = audit_assumptions(model, _sampler(model, seed=4), 200).to_dict()
    assert a == b


@given(rate=st.floats(0.2, 4.0), gain=st.floats(0.05, 0.9), sigma=st.floats(0.0, 3.0), seed=st.integers(0, 2**32))
def test_weighted_neutral_constants_never_falsified(rate, gain, sigma, seed):
    model = builtins.weighted_neutral(tau=0.5, rate=rate, gain=gain, sigma=sigma)
    rep = audit_assumptions(model, default_sampler(1, 0.5, 1 / 16, seed), 60, tol=0.0)
    assert rep.gating_passed, rep.to_dict()


@given(rate=st.floats(0.5, 4.0), coupling=st.floats(-2.0, 2.0), gain=st.floats(-0.9, 0.9).filter(lambda g: abs(g) > 0.01),
       seed=st.integers(0, 2**32))
def test_discrete_delay_constants_never_falsified(rate, coupling, gain, seed):
    model = builtins.discrete_delay(tau=1.0, rate=rate, coupling=coupling, gain=gain)
    rep = audit_assumptions(model, default_sampler(1, 1.0, 1 / 16, seed), 60, tol=0.0)
    assert rep.passed, rep.to_dict()


@given(c=st.floats(0.05, 0.95), seed=st.integers(0, 2**32))
def test_scaling_g_scales_kappa(c, seed):
    base = builtins.weighted_neutral(tau=0.5, gain=0.8)
    scaled = dataclasses.replace(base, G=AverageG(0.8 * c), kappa=base.kappa * c * c)
    rep = audit_assumptions(scaled, default_sampler(1, 0.5, 1 / 16, seed), 60)
    assert rep.conditions["g_contraction"].passed


def test_sampler_pair_kinds():
    s = default_sampler(2, 1.0, 0.25, seed=1)
    kinds = [next(s)[0].split("#")[0] for _ in range(6)]
    assert kinds == ["random", "zero", "local"] * 2
    _, xi, eta = next(s)
    assert isinstance(xi, Segment) and xi.values.shape == (5, 2)
