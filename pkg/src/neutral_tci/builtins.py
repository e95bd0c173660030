"""Registered example models with analytically derived constants."""

from __future__ import annotations

import math

import numpy as np

from .model import DelayWeight, NeutralModel
from .pathspace import ConfigError


class ZeroMap:
    def __init__(self, n):
        self.n = n

    def __call__(self, seg):
        return np.zeros(self.n)


class ConstantMatrix:
    def __init__(self, mat):
        self.mat = np.atleast_2d(np.asarray(mat, dtype=float))
        self.mat.setflags(write=False)

    def __call__(self, seg):
        return self.mat


class LinearDrift:
    """b(xi) = -rate * xi(0) + coupling * xi(-tau)."""

    def __init__(self, rate, coupling=0.0):
        self.rate = float(rate)
        self.coupling = float(coupling)

    def __call__(self, seg):
        if self.coupling == 0.0:
            return -self.rate * seg.now
        return -self.rate * seg.now + self.coupling * seg.oldest


class DelayPointG:
    """G(xi) = gain * xi(-tau)."""

    def __init__(self, gain):
        self.gain = float(gain)

    def __call__(self, seg):
        return self.gain * seg.oldest


class AverageG:
    """G(xi) = gain * (1/tau) * integral of xi over [-tau, 0]."""

    def __init__(self, gain):
        self.gain = float(gain)

    def __call__(self, seg):
        return self.gain * seg.mean()


def ou(tau: float = 0.25, rate: float = 1.0, sigma: float = 1.0, dim: int = 1) -> NeutralModel:
    """dX = -rate X dt + sigma dW (no neutral term)."""
    if rate <= 0:
        raise ConfigError("ou: rate must be positive")
    s_hs = abs(sigma) * math.sqrt(dim)
    return NeutralModel(
        dim=dim, noise_dim=dim, G=ZeroMap(dim), b=LinearDrift(rate), sigma=ConstantMatrix(sigma * np.eye(dim)),
        kappa=0.0, lambda1=2.0 * rate, lambda2=0.0, lambda3=0.0, delta=max(s_hs**2, 1e-12), sigma_bound=s_hs,
        w1=DelayWeight.uniform(tau), w2=DelayWeight.uniform(tau), g_zero=True, name="ou",
        params={"tau": tau, "rate": rate, "sigma": sigma, "dim": dim},
    )


def discrete_delay(tau: float = 1.0, rate: float = 2.0, coupling: float = 0.5, gain: float = 0.25,
                   sigma: float = 1.0) -> NeutralModel:
    """d[X(t) - g X(t-tau)] = (-a X(t) + c X(t-tau)) dt + s dW, scalar.

    With Delta = xi - eta:  2<D0 - g Dtau, -a D0 + c Dtau>
      = -2a|D0|^2 + 2(c + a g)<D0, Dtau> - 2 g c |Dtau|^2
      <= -(2a - |c+ag|)|D0|^2 + (|c+ag| - 2gc)|Dtau|^2.
    """
    if not 0 < abs(gain) < 1:
        raise ConfigError("discrete-delay: |gain| must lie in (0, 1)")
    cross = abs(coupling + rate * gain)
    lam1 = 2.0 * rate - cross
    lam2 = max(cross - 2.0 * gain * coupling, 0.0)
    # growth bound with the plain integral; a spike at -tau is only controlled
    # through the piecewise-linear shape, so delta is generous
    delta = max(sigma**2, 1.0) * 8.0 * (1.0 + abs(rate) + abs(coupling)) * (1.0 + 1.0 / tau) * 8.0
    return NeutralModel(
        dim=1, noise_dim=1, G=DelayPointG(gain), b=LinearDrift(rate, coupling),
        sigma=ConstantMatrix([[sigma]]), kappa=gain**2, lambda1=lam1, lambda2=lam2, lambda3=0.0,
        delta=delta, sigma_bound=abs(sigma), w1=DelayWeight.atom(tau), w2=DelayWeight.atom(tau),
        g_strictly_past=True, name="discrete-delay",
        params={"tau": tau, "rate": rate, "coupling": coupling, "gain": gain, "sigma": sigma},
    )


def weighted_neutral(tau: float = 1.0, rate: float = 1.5, gain: float = 0.5, sigma: float = 1.0) -> NeutralModel:
    """d[X(t) - g avg(X_t)] = -a X(t) dt + s dW, scalar.

    |G diff|^2 <= g^2 (1/tau) int |D|^2  (Jensen), and
    2<D0 - g avg D, -a D0> <= -a(2 - g)|D0|^2 + a g (1/tau) int |D|^2.
    """
    if not 0 < abs(gain) < 1:
        raise ConfigError("weighted-neutral: |gain| must lie in (0, 1)")
    ag = rate * abs(gain)
    return NeutralModel(
        dim=1, noise_dim=1, G=AverageG(gain), b=LinearDrift(rate), sigma=ConstantMatrix([[sigma]]),
        kappa=gain**2, lambda1=2.0 * rate - ag, lambda2=ag, lambda3=0.0,
        delta=max(sigma**2, ag, ag / tau, 1e-12) + ag, sigma_bound=abs(sigma),
        w1=DelayWeight.uniform(tau), w2=DelayWeight.uniform(tau), name="weighted-neutral",
        params={"tau": tau, "rate": rate, "gain": gain, "sigma": sigma},
    )


FACTORIES = {
    "ou": ou,
    "discrete-delay": discrete_delay,
    "weighted-neutral": weighted_neutral,
}

DESCRIPTIONS = {
    "ou": "Ornstein-Uhlenbeck, G = 0, b = -rate*xi(0), sigma constant",
    "discrete-delay": "neutral delay SDE, G = gain*xi(-tau), b = -rate*xi(0) + coupling*xi(-tau)",
    "weighted-neutral": "G = gain * average of the segment (uniform weight), b = -rate*xi(0)",
    "heat-example": "Galerkin heat equation on [0, pi] with kernel neutral term and Lipschitz phi",
}


def build(name: str, **params) -> NeutralModel:
    try:
        factory = FACTORIES[name]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; registered: {sorted(FACTORIES)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"model {name!r}: {exc}") from None


def list_builtins() -> list[dict]:
    """Catalog of registered models and their declared constants (default parameters)."""
    out = []
    for name, factory in FACTORIES.items():
        m = factory()
        out.append({"name": name, "description": DESCRIPTIONS[name], "norm_mode": m.norm_mode,
                    "params": m.params, "constants": m.constants()})
    from .galerkin import HeatExampleSpec, build_heat_example

    spec = HeatExampleSpec()
    hm = build_heat_example(spec, K=16)
    out.append({
        "name": "heat-example", "description": DESCRIPTIONS["heat-example"], "norm_mode": "uniform",
        "params": {"L": spec.L, "tau": spec.tau, "amplitude": spec.amplitude, "K": 16},
        "constants": {"kappa": None, "lambda1": None, "lambda2": None, "lambda3": None, "delta": None,
                      "sigma_bound": 1.0, "rho1": hm.rho1, "rho2": hm.rho2, "rho3": hm.rho3,
                      "M": hm.M, "nu": hm.nu, "alpha": hm.alpha},
        "formulas": {"rho1": "L*tau", "rho2": "0", "rho3": "sqrt(N*tau)", "M": "1", "nu": "-1"},
    })
    return out
