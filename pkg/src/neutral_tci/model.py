"""Coefficient functionals (G, b, sigma) of a neutral functional SDE and their
structural constants, plus a sampling audit of the declared inequalities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy import integrate

from .pathspace import ConfigError, DomainError, Segment

Coefficient = Callable[[Segment], np.ndarray]


@dataclass(frozen=True)
class DelayWeight:
    """Probability weight on [-tau, 0]: an optional density plus point masses.

    ``atoms`` holds (theta, mass) pairs with theta in [-tau, 0]; ``tau`` is
    needed to validate the total mass of the density.
    """

    tau: float
    density: Callable[[float], float] | None = None
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        total = sum(p for _, p in self.atoms)
        for th, p in self.atoms:
            if p < 0 or th < -self.tau - 1e-12 or th > 1e-12:
                raise ConfigError(f"bad atom ({th}, {p})")
        if self.density is not None:
            mass, _ = integrate.quad(self.density, -self.tau, 0.0, epsabs=1e-13, epsrel=1e-13, limit=200)
            total += mass
        if abs(total - 1.0) > 1e-10:
            raise ConfigError(f"delay weight has total mass {total}, expected 1")

    @classmethod
    def uniform(cls, tau: float) -> "DelayWeight":
        return cls(tau, density=_UniformDensity(tau))

    @classmethod
    def atom(cls, tau: float, theta: float | None = None) -> "DelayWeight":
        return cls(tau, atoms=((-tau if theta is None else theta, 1.0),))

    def integrate(self, seg_sq: np.ndarray, dt: float) -> float:
        """Weighted integral of a scalar function given on the delay grid."""
        out = 0.0
        if self.density is not None:
            theta = -self.tau + dt * np.arange(seg_sq.shape[0])
            w = np.array([self.density(th) for th in theta])
            out += float(np.trapezoid(w * seg_sq, dx=dt))
        for th, p in self.atoms:
            s = (th + self.tau) / dt
            j = min(int(math.floor(s + 1e-9)), seg_sq.shape[0] - 1)
            frac = s - j
            val = seg_sq[j] if frac <= 1e-9 else (1 - frac) * seg_sq[j] + frac * seg_sq[j + 1]
            out += p * float(val)
        return out


class _UniformDensity:
    def __init__(self, tau):
        self.tau = tau

    def __call__(self, theta):
        return 1.0 / self.tau


@dataclass(frozen=True)
class NeutralModel:
    """Neutral functional SDE  d[X(t) -+ G(X_t)] = b(X_t) dt + sigma(X_t) dW(t).

    ``norm_mode='weighted'`` reads lambda1/lambda2/lambda3/kappa as the
    weighted-integral constants; ``'uniform'`` reads them as the sup-norm
    constants (lambda1 -> growth, lambda2 -> monotonicity, lambda3 -> sigma
    Lipschitz).  kappa == 0 is accepted only together with ``g_zero``.
    """

    dim: int
    noise_dim: int
    G: Coefficient
    b: Coefficient
    sigma: Coefficient
    kappa: float
    lambda1: float
    lambda2: float
    lambda3: float
    delta: float
    sigma_bound: float
    w1: DelayWeight | None = None
    w2: DelayWeight | None = None
    neutral_sign: str = "minus"
    norm_mode: str = "weighted"
    g_zero: bool = False
    g_strictly_past: bool = False
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.neutral_sign not in ("minus", "plus"):
            raise ConfigError("neutral_sign must be 'minus' or 'plus'")
        if self.norm_mode not in ("weighted", "uniform"):
            raise ConfigError("norm_mode must be 'weighted' or 'uniform'")
        if not (0.0 <= self.kappa < 1.0) or (self.kappa == 0.0 and not self.g_zero):
            raise DomainError(f"kappa={self.kappa} must lie in (0, 1)")
        for nm in ("lambda2", "lambda3", "delta", "sigma_bound"):
            if getattr(self, nm) < 0:
                raise ConfigError(f"{nm} must be nonnegative")
        if self.norm_mode == "uniform" and self.lambda1 < 0:
            raise ConfigError("uniform-norm growth constant must be nonnegative")
        if self.norm_mode == "weighted" and (self.w1 is None or self.w2 is None) and not self.g_zero:
            raise ConfigError("weighted mode needs delay weights w1 and w2")

    @property
    def sign(self) -> float:
        """+1 when the neutral term enters as X - G, -1 for X + G."""
        return 1.0 if self.neutral_sign == "minus" else -1.0

    def neutral(self, seg: Segment) -> np.ndarray:
        """X(t) -+ G(X_t) for the segment."""
        return seg.now - self.sign * self.G(seg)

    def constants(self) -> dict:
        return {
            "kappa": self.kappa, "lambda1": self.lambda1, "lambda2": self.lambda2,
            "lambda3": self.lambda3, "delta": self.delta, "sigma_bound": self.sigma_bound,
        }


# ---------------------------------------------------------------------------
# audit

@dataclass
class ConditionResult:
    name: str
    worst_ratio: float = 0.0
    n_samples: int = 0
    worst_pair: str = ""
    passed: bool = True


@dataclass
class AuditReport:
    mode: str
    conditions: dict[str, ConditionResult]
    tol: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    @property
    def gating_passed(self) -> bool:
        """Pass flag restricted to the conditions the constant assembly relies on."""
        return all(self.conditions[k].passed for k in GATING[self.mode] if k in self.conditions)

    def failed(self) -> list[str]:
        return [k for k, c in self.conditions.items() if not c.passed]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "tol": self.tol,
            "passed": self.passed,
            "gating_passed": self.gating_passed,
            "conditions": {
                k: {
                    "worst_ratio": (c.worst_ratio if math.isfinite(c.worst_ratio) else "inf"),
                    "n_samples": c.n_samples,
                    "worst_pair": c.worst_pair,
                    "passed": c.passed,
                }
                for k, c in self.conditions.items()
            },
        }


# conditions used by the constant assembly; growth conditions only rule out explosion
GATING = {
    "weighted": ("g_zero", "g_contraction", "monotonicity", "sigma_lipschitz", "sigma_bound"),
    "uniform": ("g_zero", "g_contraction", "monotonicity", "sigma_lipschitz", "sigma_bound"),
}

# rounding allowance on ratios that are tight by construction
_ROUND = 1e-12


def _ratio(num: float, den: float, scale: float) -> float:
    if num <= _ROUND * scale:
        return 0.0 if den <= 0 else max(num, 0.0) / den
    if den <= 0.0:
        return math.inf
    return num / den


def _rounding_allowance(xi: Segment, eta: Segment) -> float:
    """Relative slack for cancellation when differencing coefficient values at
    nearby segments: a few hundred ulps scaled by |input| / |difference|."""
    diff = (xi - eta).sup_norm()
    if diff == 0.0:
        return _ROUND
    size = 1.0 + max(xi.sup_norm(), eta.sup_norm())
    return _ROUND + 256.0 * np.finfo(float).eps * size / diff


def random_segment(rng: np.random.Generator, dim: int, tau: float, dt: float,
                   box: float = 1.0, nodes: int = 8) -> Segment:
    """Piecewise-linear segment with `nodes` node values uniform in [-box, box]^dim."""
    m = round(tau / dt)
    theta = -tau + dt * np.arange(m + 1)
    knots = np.linspace(-tau, 0.0, nodes)
    node_vals = rng.uniform(-box, box, size=(nodes, dim))
    vals = np.stack([np.interp(theta, knots, node_vals[:, k]) for k in range(dim)], axis=-1)
    return Segment(vals, tau, dt)


def default_sampler(dim: int, tau: float, dt: float, seed: int = 0, box: float = 1.0,
                    nodes: int = 8, eps: float = 1e-3) -> Iterator[tuple[str, Segment, Segment]]:
    """Endless stream of segment pairs: random pairs, (xi, 0) pairs and local
    perturbations (xi, xi + eps*e_i)."""
    rng = np.random.default_rng(seed)
    k = 0
    while True:
        kind = k % 3
        xi = random_segment(rng, dim, tau, dt, box, nodes)
        if kind == 0:
            eta = random_segment(rng, dim, tau, dt, box, nodes)
            yield f"random#{k}", xi, eta
        elif kind == 1:
            yield f"zero#{k}", xi, Segment(np.zeros_like(xi.values), tau, dt)
        else:
            i = int(rng.integers(dim))
            shifted = xi.values.copy()
            shifted[:, i] += eps
            yield f"local#{k}(e{i})", xi, Segment(shifted, tau, dt)
        k += 1


def _condition_ratios(model: NeutralModel, xi: Segment, eta: Segment) -> dict[str, float]:
    dt = xi.dt
    d = xi.values - eta.values
    d_sq = np.sum(d * d, axis=-1)
    d0 = d[-1]
    d0_sq = float(d0 @ d0)
    sup_sq = float(np.max(d_sq))
    gx, gy = np.asarray(model.G(xi), float), np.asarray(model.G(eta), float)
    bx, by = np.asarray(model.b(xi), float), np.asarray(model.b(eta), float)
    sx = np.atleast_2d(np.asarray(model.sigma(xi), float))
    sy = np.atleast_2d(np.asarray(model.sigma(eta), float))
    dg = gx - gy
    dg_sq = float(dg @ dg)
    ds_sq = float(np.sum((sx - sy) ** 2))
    mx = xi.now - model.sign * gx
    my = eta.now - model.sign * gy
    cross = 2.0 * float((mx - my) @ (bx - by))
    mono_lhs = cross + ds_sq
    growth_lhs = 2.0 * float(mx @ bx) + float(np.sum(sx**2))
    scale = abs(cross) + ds_sq + d0_sq * abs(model.lambda1) + 1e-300
    out = {}
    if model.norm_mode == "weighted":
        w1_int = model.w1.integrate(d_sq, dt) if model.w1 is not None else 0.0
        w2_int = model.w2.integrate(d_sq, dt) if model.w2 is not None else 0.0
        out["g_contraction"] = _ratio(dg_sq, model.kappa * w1_int, dg_sq + 1e-300)
        if model.lambda1 >= 0:
            out["monotonicity"] = _ratio(mono_lhs + model.lambda1 * d0_sq, model.lambda2 * w2_int, scale)
        else:
            out["monotonicity"] = _ratio(mono_lhs, -model.lambda1 * d0_sq + model.lambda2 * w2_int, scale)
        # growth bound uses the plain (unweighted) integral
        x_sq = np.sum(xi.values**2, axis=-1)
        rhs = model.delta * (1.0 + float(xi.now @ xi.now) + float(np.trapezoid(x_sq, dx=dt)))
        out["growth"] = _ratio(growth_lhs, rhs, abs(growth_lhs) + 1e-300)
        out["sigma_lipschitz"] = _ratio(ds_sq, model.lambda3 * float(np.trapezoid(d_sq, dx=dt)), ds_sq + 1e-300)
    else:
        out["g_contraction"] = _ratio(math.sqrt(dg_sq), model.kappa * math.sqrt(sup_sq), math.sqrt(dg_sq) + 1e-300)
        out["monotonicity"] = _ratio(mono_lhs, model.lambda2 * sup_sq, scale)
        rhs = model.lambda1 * (1.0 + xi.sup_norm() ** 2)
        out["growth"] = _ratio(growth_lhs, rhs, abs(growth_lhs) + 1e-300)
        out["sigma_lipschitz"] = _ratio(ds_sq, model.lambda3 * sup_sq, ds_sq + 1e-300)
    sn = math.sqrt(float(np.sum(sx**2)))
    out["sigma_bound"] = _ratio(sn, model.sigma_bound, sn + 1e-300)
    return out


def audit_assumptions(model: NeutralModel, sampler: Iterator[tuple[str, Segment, Segment]] | Sequence,
                      n_pairs: int, tol: float = 0.0) -> AuditReport:
    """Evaluate the declared structural inequalities on `n_pairs` sampled pairs.

    Each condition records its worst ratio LHS/RHS (after moving negative
    right-hand terms to the left).  A pass only means no counterexample was
    found among the samples.
    """
    if n_pairs < 1:
        raise DomainError("n_pairs must be >= 1")
    names = ("g_zero", "g_contraction", "monotonicity", "growth", "sigma_lipschitz", "sigma_bound")
    results = {k: ConditionResult(k) for k in names}
    it = iter(sampler)
    zero_checked = False
    for _ in range(n_pairs):
        desc, xi, eta = next(it)
        if not zero_checked:
            g0 = np.asarray(model.G(Segment(np.zeros_like(xi.values), xi.tau, xi.dt)), float)
            r = results["g_zero"]
            r.n_samples = 1
            r.worst_ratio = math.inf if np.any(g0 != 0.0) else 0.0
            r.worst_pair = "zero segment"
            zero_checked = True
        allow = _rounding_allowance(xi, eta)
        for k, v in _condition_ratios(model, xi, eta).items():
            v = float(v) / (1.0 + allow) if math.isfinite(v) else float(v)
            r = results[k]
            r.n_samples += 1
            if v > r.worst_ratio or r.worst_pair == "":
                if v >= r.worst_ratio:
                    r.worst_ratio = v
                    r.worst_pair = desc
    for r in results.values():
        r.passed = r.worst_ratio <= 1.0 + tol + _ROUND
    return AuditReport(model.norm_mode, results, tol)
