"""Spectral Galerkin truncation of the neutral functional heat equation on
L^2([0, pi]) with Dirichlet conditions.

Coordinates are taken on e_n(x) = sqrt(2/pi) sin(n x), n = 1..K, where the
Dirichlet Laplacian acts as A e_n = -n^2 e_n.  The neutral term enters with a
plus sign: d[X + G(X_t)] = [A X + b(X_t)] dt + sigma dW.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .pathspace import ConfigError, DomainError, PathMetric, Segment, SegmentPath, TimeGrid
from .simulate import DivergenceError, NumericalOverflowError, Perturbation, initial_values
from .transport import BDG_CONSTANT, ConstantsReport, InfeasibleError


def eigenvalues(K: int) -> np.ndarray:
    """Eigenvalues n^2 of -A, n = 1..K."""
    return np.arange(1, K + 1, dtype=float) ** 2


@dataclass(frozen=True)
class SpectralField:
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise DomainError("coefficients must be a finite 1-d vector")
        object.__setattr__(self, "coeffs", c)

    @property
    def K(self) -> int:
        return self.coeffs.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    @classmethod
    def basis(cls, n: int, K: int) -> "SpectralField":
        c = np.zeros(K)
        c[n - 1] = 1.0
        return cls(c)

    def to_grid(self, x: np.ndarray) -> np.ndarray:
        """Reconstruct sum_n c_n e_n(x)."""
        n = np.arange(1, self.K + 1)
        return math.sqrt(2.0 / math.pi) * np.sin(np.outer(x, n)) @ self.coeffs


def semigroup_apply(t: float, v: SpectralField) -> SpectralField:
    """e^{tA} v, i.e. c_n -> exp(-n^2 t) c_n."""
    if t < 0:
        raise DomainError("semigroup time must be nonnegative")
    return SpectralField(np.exp(-eigenvalues(v.K) * t) * v.coeffs)


def frac_power_apply(alpha: float, v: SpectralField) -> SpectralField:
    """(-A)^alpha v, i.e. c_n -> n^{2 alpha} c_n."""
    return SpectralField(eigenvalues(v.K) ** alpha * v.coeffs)


# ---------------------------------------------------------------------------
# coefficient maps on segments of coefficient vectors

class KernelG:
    """G(X_t) for the kernel phi(theta, xi, x) = sum_{n,k} c_nk e_k(xi) e_n(x),
    constant in theta:  G(X_t)_n = sum_k c_nk * integral of a_k(theta) dtheta."""

    def __init__(self, modes: np.ndarray):
        self.modes = np.asarray(modes, dtype=float)

    def __call__(self, seg: Segment) -> np.ndarray:
        return self.modes @ (seg.tau * seg.mean())

    @property
    def depends_on_present(self) -> bool:
        return True


class PhiDrift:
    """b(X_t)(x) = phi(integral of X(t + theta, x) dtheta) in coefficient form.

    Linear phi acts mode-wise; otherwise values are formed on the interior
    sine grid x_j = j pi / (K+1) (orthonormal DST-I), phi is applied
    pointwise and the result is projected back.
    """

    def __init__(self, L: float, kind: str, K: int):
        if kind not in ("linear", "sin", "tanh"):
            raise ConfigError(f"unknown phi kind {kind!r}")
        self.L = float(L)
        self.kind = kind
        j = np.arange(1, K + 1)
        self.S = math.sqrt(2.0 / (K + 1)) * np.sin(np.outer(j, j) * math.pi / (K + 1))
        self.scale = math.sqrt((K + 1) / math.pi)

    def phi(self, u):
        if self.kind == "linear":
            return self.L * u
        if self.kind == "sin":
            return self.L * np.sin(u)
        return self.L * np.tanh(u)

    def __call__(self, seg: Segment) -> np.ndarray:
        a = seg.tau * seg.mean()
        if self.kind == "linear":
            return self.L * a
        vals = self.scale * (self.S @ a)
        return self.S @ self.phi(vals) / self.scale


@dataclass(frozen=True)
class SpdeModel:
    K: int
    tau: float
    G: Callable[[Segment], np.ndarray]
    b: Callable[[Segment], np.ndarray]
    alpha: float = 0.5
    rho1: float = 0.0
    rho2: float = 0.0
    rho3: float = 0.0
    M: float = 1.0
    nu: float = -1.0
    m_frac: float | None = None
    sigma_mode: str = "identity"
    sigma_diag: np.ndarray | None = None
    g_zero: bool = False
    kernel_energy: float = 0.0
    name: str = "spde"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        lam = eigenvalues(self.K)
        if self.K < 1 or np.any(np.diff(lam) <= 0):
            raise ConfigError("eigenvalues must be strictly increasing and positive")
        if min(self.rho1, self.rho2, self.rho3) < 0:
            raise ConfigError("Lipschitz constants must be nonnegative")
        if self.sigma_mode not in ("identity", "diagonal"):
            raise ConfigError("sigma_mode must be 'identity' or 'diagonal'")
        if self.sigma_mode == "diagonal" and (self.sigma_diag is None or len(self.sigma_diag) != self.K):
            raise ConfigError("diagonal sigma needs K multipliers")

    @property
    def eigenvalues(self) -> np.ndarray:
        return eigenvalues(self.K)

    @property
    def multipliers(self) -> np.ndarray:
        if self.sigma_mode == "identity":
            return np.ones(self.K)
        return np.asarray(self.sigma_diag, dtype=float)

    @property
    def sigma_bound(self) -> float:
        return float(np.max(np.abs(self.multipliers)))


# ---------------------------------------------------------------------------
# semigroup constants and the neutral-term smallness condition

def smoothing_constant(beta: float, nu: float, T: float, K: int, n_grid: int = 4000) -> float:
    """M_beta with max_n lambda_n^beta e^{-lambda_n t} <= M_beta t^{-beta} e^{nu t} on (0, T].

    Sup over a log-spaced t grid augmented with the per-mode stationary points
    beta / (lambda_n + nu), floored by the large-mode limit (beta/e)^beta.
    """
    if not 0 < beta <= 1:
        raise DomainError("beta must lie in (0, 1]")
    lam = eigenvalues(K)
    ts = list(np.logspace(-10, math.log10(T), n_grid))
    for ln in lam:
        if ln + nu > 0:
            ts.append(beta / (ln + nu))
    ts = np.array([t for t in ts if 0 < t <= T] + [T])
    vals = (lam[None, :] * ts[:, None]) ** beta * np.exp(-(lam[None, :] + nu) * ts[:, None])
    return float(max(np.max(vals), (beta / math.e) ** beta))


@dataclass
class SmallnessReport:
    inverse_power_norm: float
    first_addend: float
    m_frac: float
    time_integral: float
    value: float
    threshold_rho3: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def singular_integral(alpha: float, nu: float, T: float) -> float:
    """int_0^T e^{nu t} t^{alpha - 1} dt by weighted adaptive quadrature."""
    if alpha <= 0:
        raise InfeasibleError("alpha = 0 makes the neutral-term integral diverge at t = 0")
    val, _ = integrate.quad(lambda t: math.exp(nu * t), 0.0, T, weight="alg", wvar=(alpha - 1.0, 0.0),
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return float(val)


def smallness_value(rho3: float, inv_norm: float, m_frac: float, integral: float) -> float:
    return rho3 * (inv_norm + m_frac * integral)


def check_smallness(model: SpdeModel, T: float) -> SmallnessReport:
    """rho3 (||(-A)^{-alpha}|| + M_{1-alpha} int_0^T e^{nu t} t^{alpha-1} dt) and whether it is < 1."""
    alpha = model.alpha
    if not 0 < alpha <= 1:
        raise InfeasibleError("alpha must lie in (0, 1]")
    inv_norm = float(model.eigenvalues[0] ** (-alpha))
    if model.m_frac is not None:
        m = model.m_frac
    elif alpha < 1:
        m = smoothing_constant(1.0 - alpha, model.nu, T, model.K)
    else:
        m = model.M
    integral = singular_integral(alpha, model.nu, T)
    value = smallness_value(model.rho3, inv_norm, m, integral)
    # the value is increasing in rho3; bracket [0, hi] and bisect for value = 1
    hi = 1.0
    while smallness_value(hi, inv_norm, m, integral) < 1.0:
        hi *= 2.0
    thr = optimize.bisect(lambda r: smallness_value(r, inv_norm, m, integral) - 1.0, 0.0, hi,
                          xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return SmallnessReport(inv_norm, model.rho3 * inv_norm, m, integral, value, thr, value < 1.0)


# ---------------------------------------------------------------------------
# heat example

@dataclass(frozen=True)
class HeatExampleSpec:
    """Kernel phi(theta, xi, x) = sum c_nk e_k(xi) e_n(x) (constant in theta).

    By default a single-mode kernel amplitude * sin(xi) sin(x) / tau, i.e.
    c_11 = amplitude * pi / (2 tau).
    """

    L: float = 0.5
    tau: float = 0.5
    amplitude: float = 0.1
    phi: str = "linear"
    varphi_modes: np.ndarray | None = None

    def modes(self, K: int) -> np.ndarray:
        if self.varphi_modes is not None:
            c = np.asarray(self.varphi_modes, dtype=float)
            out = np.zeros((K, K))
            r, s = min(K, c.shape[0]), min(K, c.shape[1])
            out[:r, :s] = c[:r, :s]
            return out
        out = np.zeros((K, K))
        out[0, 0] = self.amplitude * math.pi / (2.0 * self.tau)
        return out

    def kernel_energy(self, K: int) -> float:
        """N = int int int (d/dx phi)^2 = tau * sum_{n,k} n^2 c_nk^2."""
        c = self.modes(K)
        n = np.arange(1, K + 1, dtype=float)
        return float(self.tau * np.sum((n[:, None] ** 2) * c**2))


def build_heat_example(spec: HeatExampleSpec, K: int) -> SpdeModel:
    N = spec.kernel_energy(K)
    if not math.isfinite(N):
        raise DomainError("kernel energy must be finite")
    modes = spec.modes(K)
    return SpdeModel(
        K=K, tau=spec.tau, G=KernelG(modes), b=PhiDrift(spec.L, spec.phi, K), alpha=0.5,
        rho1=spec.L * spec.tau, rho2=0.0, rho3=math.sqrt(N * spec.tau), M=1.0, nu=-1.0,
        g_zero=not np.any(modes), kernel_energy=N, name="heat-example",
        params={"L": spec.L, "tau": spec.tau, "amplitude": spec.amplitude, "phi": spec.phi, "K": K},
    )


# ---------------------------------------------------------------------------
# integration

def mild_step(model: SpdeModel, buf: np.ndarray, i: int, z: np.ndarray, g_now: np.ndarray, dt: float,
              normals: np.ndarray | None, h_vec: np.ndarray | None = None,
              fp_tol: float = 1e-12, max_iter: int = 100):
    """Advance Z = X + G(X_t) by one exponential-Euler step and recover X.

    `buf` holds coefficient rows on the grid; rows i..i+m form the current
    segment and row i+m+1 receives the new state.  Per mode n with
    lambda = n^2:
        z <- e^{-lambda dt} z + (1 - e^{-lambda dt})/lambda * (lambda G_n + b_n + q_n h_n)
             + q_n sqrt((1 - e^{-2 lambda dt}) / (2 lambda)) * normal_n
    Returns (z_new, x_new, g_new).
    """
    m = round(model.tau / dt)
    lam = model.eigenvalues
    seg = Segment(buf[i: i + m + 1], model.tau, dt)
    decay = np.exp(-lam * dt)
    gain = -np.expm1(-lam * dt) / lam
    forcing = lam * g_now + np.asarray(model.b(seg), float)
    q = model.multipliers
    if h_vec is not None:
        forcing = forcing + q * h_vec
    z_new = decay * z + gain * forcing
    if normals is not None:
        z_new = z_new + q * np.sqrt(-np.expm1(-2.0 * lam * dt) / (2.0 * lam)) * normals
    k = i + m + 1
    if model.g_zero:
        buf[k] = z_new
        return z_new, z_new, np.zeros_like(z_new)
    new_seg = Segment(buf[i + 1: k + 1], model.tau, dt)
    x = buf[k - 1].copy()
    it = 0
    while True:
        buf[k] = x
        g = np.asarray(model.G(new_seg), float)
        x_new = z_new - g
        r = float(np.linalg.norm(x_new - x))
        x = x_new
        it += 1
        if r <= fp_tol:
            break
        if it >= max_iter:
            raise DivergenceError(f"neutral inversion stalled (residual {r:.3e})")
    buf[k] = x
    g = np.asarray(model.G(new_seg), float)
    if not np.all(np.isfinite(x)):
        raise NumericalOverflowError("non-finite Galerkin state")
    return z_new, x, g


def _spde_integrate(model: SpdeModel, psi: np.ndarray, grid: TimeGrid, normals: np.ndarray | None,
                    h: Perturbation | None):
    m, dt = grid.m, grid.dt
    buf = np.empty((grid.n_points, model.K))
    buf[: m + 1] = psi
    seg0 = Segment(buf[: m + 1], model.tau, dt)
    g = np.zeros(model.K) if model.g_zero else np.asarray(model.G(seg0), float)
    z = buf[m] + g
    use_h = h is not None and not h.is_zero
    cap = h.energy_cap if use_h else None
    energy = 0.0
    for i in range(grid.n_steps):
        hv = None
        if use_h:
            hv = np.asarray(h.h(i * dt, Segment(buf[i: i + m + 1], model.tau, dt)), float)
            e = float(hv @ hv)
            if cap is not None and (energy + e) * dt > cap:
                hv, e, cap = hv * 0.0, 0.0, -1.0
            energy += e
        z, _, g = mild_step(model, buf, i, z, g, dt, None if normals is None else normals[i], hv)
    return buf, energy * dt


def simulate_spde(model: SpdeModel, psi, grid: TimeGrid, noise=None, perturbation: Perturbation | None = None) -> SegmentPath:
    """Galerkin path of the coefficient vector; ``noise=None`` gives the deterministic flow."""
    if abs(grid.tau - model.tau) > 1e-12:
        raise ConfigError("grid delay differs from model delay")
    psi_vals = initial_values(psi, grid, model.K)
    normals = None if noise is None else noise.standard_normals(grid.n_steps, model.K)
    buf, _ = _spde_integrate(model, psi_vals, grid, normals, perturbation)
    return SegmentPath(grid, buf)


@dataclass(frozen=True)
class SpdeCoupledSample:
    x: SegmentPath
    y: SegmentPath
    energy: float

    def squared_distance(self, kind) -> float:
        from .pathspace import squared_distance_from_diff

        return squared_distance_from_diff(self.x.forward - self.y.forward, self.x.grid, PathMetric.parse(kind))


def simulate_spde_coupled(model: SpdeModel, psi, h: Perturbation, grid: TimeGrid, noise) -> SpdeCoupledSample:
    psi_vals = initial_values(psi, grid, model.K)
    normals = noise.standard_normals(grid.n_steps, model.K)
    xb, energy = _spde_integrate(model, psi_vals, grid, normals, h)
    yb, _ = _spde_integrate(model, psi_vals, grid, normals, None)
    return SpdeCoupledSample(SegmentPath(grid, xb), SegmentPath(grid, yb), energy)


@dataclass(frozen=True)
class SpdeEnsembleJob:
    model: SpdeModel
    psi: object
    h: Perturbation
    grid: TimeGrid
    metrics: tuple = (PathMetric.UNIFORM_SUP,)

    def coupled(self, noise) -> SpdeCoupledSample:
        return simulate_spde_coupled(self.model, self.psi, self.h, self.grid, noise)


def assemble_spde_constants(model: SpdeModel, T: float, bdg: float = BDG_CONSTANT) -> ConstantsReport:
    """Explicit C for the uniform metric on coefficient paths.

    The neutral term is absorbed with epsilon equal to the smallness value;
    drift and sigma*h convolutions use Hoelder with M~ = M sup ||e^{tA}||, the
    stochastic convolution difference uses `bdg` * rho2^2, then Gronwall.
    """
    rep = check_smallness(model, T)
    eps = rep.value
    if not eps < 1.0:
        raise InfeasibleError(f"neutral-term smallness fails: value {eps:.6g} >= 1")
    m_tilde = model.M * 1.0  # sup_t ||e^{tA}|| = e^{-lambda_1 t} <= 1 on [0, T]
    sig2 = model.sigma_bound**2
    denom = (1.0 - eps) ** 2
    rate = (3.0 * T * model.rho1**2 * m_tilde**2 + 3.0 * bdg * model.rho2**2) / denom
    gain = 3.0 * T * m_tilde**2 * sig2 / denom
    c = gain * math.exp(rate * T)
    trace = [
        ("neutral_smallness_value", eps),
        ("semigroup_bound_M_tilde", m_tilde),
        ("absorption_factor", 1.0 / (1.0 - eps)),
        ("hoelder_drift_rate", rate),
        ("energy_gain", gain),
        ("bdg_constant", bdg),
        ("gronwall_exponent", rate * T),
        ("final_C", c),
    ]
    return ConstantsReport(PathMetric.UNIFORM_SUP, "spde", float(T), eps, math.nan, math.nan, math.nan,
                           math.nan, c, False, trace)


@dataclass
class HeatAuditReport:
    """Worst sampled ratios for the drift and neutral-term Lipschitz bounds."""

    drift_worst_ratio: float
    neutral_worst_ratio: float
    n_pairs: int
    tol: float = 0.0

    @property
    def passed(self) -> bool:
        lim = 1.0 + self.tol + 1e-12
        return self.drift_worst_ratio <= lim and self.neutral_worst_ratio <= lim

    def to_dict(self) -> dict:
        return {"drift_worst_ratio": self.drift_worst_ratio, "neutral_worst_ratio": self.neutral_worst_ratio,
                "n_pairs": self.n_pairs, "tol": self.tol, "passed": self.passed}


def audit_heat_example(model: SpdeModel, dt: float, n_pairs: int, seed: int = 0, box: float = 1.0,
                       tol: float = 0.0) -> HeatAuditReport:
    """Check ||b(xi) - b(eta)|| <= rho1 ||xi - eta||_inf and
    ||(-A)^alpha (G(xi) - G(eta))|| <= rho3 ||xi - eta||_inf on sampled pairs."""
    from .model import _rounding_allowance, default_sampler

    sampler = default_sampler(model.K, model.tau, dt, seed, box)
    worst_b = worst_g = 0.0
    for _ in range(n_pairs):
        _, xi, eta = next(sampler)
        d = (xi - eta).sup_norm()
        if d == 0.0:
            continue
        slack = 1.0 + _rounding_allowance(xi, eta)
        db = float(np.linalg.norm(np.asarray(model.b(xi)) - np.asarray(model.b(eta))))
        dg = frac_power_apply(model.alpha, SpectralField(np.asarray(model.G(xi)) - np.asarray(model.G(eta)))).norm()
        rb = db / (model.rho1 * d) if model.rho1 > 0 else (math.inf if db > 0 else 0.0)
        rg = dg / (model.rho3 * d) if model.rho3 > 0 else (math.inf if dg > 0 else 0.0)
        worst_b = max(worst_b, rb / slack)
        worst_g = max(worst_g, rg / slack)
    return HeatAuditReport(worst_b, worst_g, n_pairs, tol)
