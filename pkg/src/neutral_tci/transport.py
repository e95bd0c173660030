"""Explicit transportation-cost constants, Girsanov entropy, coupling and
empirical Wasserstein estimates, and the W2^2 <= 2 C H verdict."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import NeutralModel
from .pathspace import ConfigError, DomainError, PathMetric, SegmentPath, squared_distance_from_diff

Z95 = 1.96
BDG_CONSTANT = 6.0
GOLDEN_ITERATIONS = 64
ASSIGNMENT_CAP = 512


class InfeasibleError(ValueError):
    """The requested constant cannot be assembled under the declared constants."""


class SizeError(ValueError):
    pass


@dataclass(frozen=True)
class Estimate:
    mean: float
    halfwidth: float
    n: int

    @property
    def lower(self) -> float:
        return self.mean - self.halfwidth

    @property
    def upper(self) -> float:
        return self.mean + self.halfwidth

    def to_dict(self) -> dict:
        return {"mean": self.mean, "halfwidth": self.halfwidth, "n": self.n}


def _normal_ci(values: np.ndarray, scale: float = 1.0) -> Estimate:
    values = np.asarray(values, float)
    n = values.size
    mean = float(values.mean())
    sd = float(values.std(ddof=1)) if n > 1 else 0.0
    return Estimate(scale * mean, scale * Z95 * sd / math.sqrt(n), n)


# ---------------------------------------------------------------------------
# constants

@dataclass
class ConstantsReport:
    metric: PathMetric
    norm_mode: str
    horizon: float
    epsilon: float
    lambda_tilde: float
    beta1: float
    beta2: float
    c1: float
    c_metric: float
    t_independent: bool
    assembly_trace: list[tuple[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric.value, "norm_mode": self.norm_mode, "horizon": self.horizon,
            "epsilon": self.epsilon, "lambda_tilde": self.lambda_tilde, "beta1": self.beta1,
            "beta2": self.beta2, "c1": self.c1, "c_metric": self.c_metric,
            "t_independent": self.t_independent,
            "assembly_trace": [[t, v] for t, v in self.assembly_trace],
        }


def golden_section_min(f, lo: float, hi: float, iterations: int = GOLDEN_ITERATIONS) -> float:
    """Minimizer of a unimodal f on [lo, hi] after a fixed number of iterations."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iterations):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return c if fc <= fd else d


def _weighted_core(model: NeutralModel, eps: float) -> dict:
    k = model.kappa
    sk = math.sqrt(k)
    split = 1.0 / (1.0 - sk) ** 2
    lam_t = model.lambda1 - model.lambda2 - eps
    beta1 = lam_t * split
    beta2 = 4.0 * (1.0 + k) * model.sigma_bound**2 / eps * split
    c1 = -model.lambda1 + model.lambda2 + 2.0 * (1.0 + k) * eps
    return {"split": split, "lambda_tilde": lam_t, "beta1": beta1, "beta2": beta2, "c1": c1}


def _time_integral_gain(beta1: float, beta2: float, T: float, t_independent: bool) -> float:
    """Upper bound K with int_0^T E|X-Y|^2 <= K E int |h|^2 from the Gronwall envelope."""
    if beta2 == 0.0:
        return 0.0
    if beta1 > 0:
        # stationary envelope: valid for every horizon, hence T-independent
        return beta2 / beta1
    if beta1 == 0:
        return beta2 * T
    return beta2 * math.expm1(-beta1 * T) / (-beta1)


def _envelope(beta1: float, s: float) -> float:
    """max over r <= s of exp(-beta1 (s - r))."""
    return 1.0 if beta1 >= 0 else math.exp(-beta1 * s)


def _unit_interval_recursion(model: NeutralModel, core: dict, eps: float, N: int, tau: float,
                             trace: list | None) -> float:
    k = model.kappa
    sk = math.sqrt(k)
    split, beta1, beta2, c1 = core["split"], core["beta1"], core["beta2"], core["c1"]
    lag = sk / (1.0 - sk)
    window = max(1, math.ceil(tau - 1e-12))
    sig2 = model.sigma_bound**2
    coeffs: list[float] = []
    for j in range(N):
        a_j = beta2 * min(tau, j) * _envelope(beta1, j)
        b_j = beta2 * _envelope(beta1, j + 1)
        m_at_start = 0.0 if j == 0 else 4.0 * beta2 * _envelope(beta1, j)
        m_sup = (2.0 * m_at_start + 2.0 * (model.lambda2 + 2.0 * k * eps) * a_j + 2.0 * abs(c1) * b_j
                 + 2.0 * sig2 / eps + 18.0 * model.lambda3 * tau * (a_j + b_j))
        past = sum(coeffs[max(0, j - window): j])
        c_j = split * m_sup + lag * past
        coeffs.append(c_j)
        if trace is not None:
            trace.append((f"unit_interval[{j}]", c_j))
    return float(sum(coeffs))


def _weighted_constant(model: NeutralModel, metric: PathMetric, T: float, eps: float, tau: float,
                       t_independent: bool, trace: list | None) -> tuple[float, dict]:
    core = _weighted_core(model, eps)
    if trace is not None:
        trace += [
            ("epsilon", eps),
            ("lambda_tilde", core["lambda_tilde"]),
            ("neutral_split_factor", core["split"]),
            ("gronwall_rate_beta1", core["beta1"]),
            ("energy_gain_beta2", core["beta2"]),
            ("interval_drift_C1", core["c1"]),
            ("interval_drift_C1_abs", abs(core["c1"])),
            ("bdg_constant", BDG_CONSTANT),
            ("bdg_young_factor", 18.0 * model.lambda3 * tau),
        ]
    if metric is PathMetric.L2_IN_TIME:
        if t_independent and core["lambda_tilde"] <= 0:
            raise InfeasibleError(
                "T-independent L2 constant needs lambda1 - lambda2 - epsilon > 0 "
                f"(lambda1 - lambda2 = {model.lambda1 - model.lambda2:g}, epsilon = {eps:g})")
        c = _time_integral_gain(core["beta1"], core["beta2"], T, t_independent)
        if trace is not None:
            trace.append(("time_integrated_envelope", c))
        return c, core
    N = int(round(T)) if metric is PathMetric.SUM_SUP_SQUARES else math.ceil(T - 1e-12)
    if metric is PathMetric.SUM_SUP_SQUARES and abs(T - N) > 1e-12:
        raise ConfigError("sum-of-sup-squares metric needs an integer horizon")
    c = _unit_interval_recursion(model, core, eps, max(N, 1), tau, trace)
    if trace is not None:
        trace.append(("sum_of_unit_intervals", c))
        if metric is PathMetric.UNIFORM_SUP:
            # sup over [0, T] is dominated by the sum of the unit-interval sups
            trace.append(("sup_dominated_by_unit_sum", c))
    return c, core


def _uniform_constant(model: NeutralModel, metric: PathMetric, T: float, trace: list) -> tuple[float, dict]:
    k = model.kappa
    split = 1.0 / (1.0 - k) ** 2
    lam3 = max(model.lambda3, model.lambda3**2)
    rate = model.lambda2 + 2.0 * (1.0 + k**2) + 18.0 * lam3
    sig2 = model.sigma_bound**2
    c_sup = 2.0 * split * sig2 * math.exp(2.0 * split * rate * T)
    trace += [
        ("neutral_split_factor", split),
        ("bdg_constant", BDG_CONSTANT),
        ("sup_martingale_rate", rate),
        ("absorbed_half_factor", 2.0),
        ("gronwall_exponent", 2.0 * split * rate * T),
        ("uniform_sup_constant", c_sup),
    ]
    if metric is PathMetric.UNIFORM_SUP:
        c = c_sup
    elif metric is PathMetric.L2_IN_TIME:
        c = T * c_sup
        trace.append(("time_integral_by_sup", c))
    else:
        N = int(round(T))
        if abs(T - N) > 1e-12 or N < 1:
            raise ConfigError("sum-of-sup-squares metric needs an integer horizon")
        c = N * c_sup
        trace.append(("unit_sum_by_sup", c))
    core = {"lambda_tilde": math.nan, "beta1": math.nan, "beta2": math.nan, "c1": math.nan}
    return c, core


def assemble_constants(model: NeutralModel, metric, T: float, epsilon: float | None = None,
                       t_independent: bool = False, tau: float | None = None) -> ConstantsReport:
    """Replay the proof chain with explicit numbers and return C for `metric`."""
    metric = PathMetric.parse(metric)
    if not model.kappa < 1.0:
        raise DomainError("kappa must be < 1")
    if T <= 0:
        raise DomainError("horizon must be positive")
    if tau is None:
        w = model.w1 or model.w2
        tau = w.tau if w is not None else float(model.params.get("tau", 1.0))
    gap = model.lambda1 - model.lambda2
    trace: list = []
    if model.norm_mode == "uniform":
        eps = 0.5 if epsilon is None else float(epsilon)
        c, core = _uniform_constant(model, metric, T, trace)
    else:
        if t_independent and metric is PathMetric.L2_IN_TIME and gap <= 0:
            raise InfeasibleError(
                f"a T-independent L2 constant requires lambda1 - lambda2 > 0 (got {gap:g})")
        if epsilon is not None:
            eps = float(epsilon)
            if not 0.0 < eps < 1.0:
                raise DomainError("epsilon must lie in (0, 1)")
        elif gap > 0:
            hi = min(1.0, gap)
            pad = 1e-9 * hi
            eps = golden_section_min(
                lambda e: _weighted_constant(model, metric, T, e, tau, t_independent, None)[0],
                pad, hi - pad)
        else:
            eps = 0.5
        c, core = _weighted_constant(model, metric, T, eps, tau, t_independent, trace)
    trace.append(("final_C", c))
    return ConstantsReport(metric, model.norm_mode, float(T), eps, core["lambda_tilde"], core["beta1"],
                           core["beta2"], core["c1"], float(c), t_independent, trace)


# ---------------------------------------------------------------------------
# estimators

def entropy_from_energies(energies) -> Estimate:
    """H = (1/2) E int |h|^2 with a 95% normal confidence interval."""
    e = np.asarray(list(energies) if not isinstance(energies, np.ndarray) else energies, float)
    if e.size == 0:
        raise DomainError("no energies")
    if np.any(e < 0):
        raise DomainError("energies must be nonnegative")
    return _normal_ci(e, 0.5)


def coupling_distance_sq(samples, metric=None) -> Estimate:
    """Mean of d^2(X, Y) over coupled samples (summaries, CoupledSamples or raw values)."""
    if samples is None or len(samples) == 0:
        raise DomainError("no samples")
    first = samples[0]
    if isinstance(first, (float, int, np.floating)):
        vals = np.asarray(samples, float)
    else:
        kind = PathMetric.parse(metric)
        if hasattr(first, "d2"):
            vals = np.array([s.d2[kind] for s in samples])
        else:
            vals = np.array([s.squared_distance(kind) for s in samples])
    return _normal_ci(vals)


def cost_matrix(p_samples, q_samples, metric) -> np.ndarray:
    kind = PathMetric.parse(metric)
    grid = p_samples[0].grid
    n = len(p_samples)
    P = np.stack([p.forward for p in p_samples])
    Q = np.stack([q.forward for q in q_samples])
    out = np.empty((n, n))
    for i in range(n):
        diff = P[i][None] - Q
        if kind is PathMetric.L2_IN_TIME:
            out[i] = np.trapezoid(np.sum(diff * diff, axis=-1), dx=grid.dt, axis=-1)
        elif kind is PathMetric.UNIFORM_SUP:
            out[i] = np.max(np.sum(diff * diff, axis=-1), axis=-1)
        else:
            out[i] = [squared_distance_from_diff(d, grid, kind) for d in diff]
    return out


def empirical_w2(p_samples: list[SegmentPath], q_samples: list[SegmentPath], metric,
                 cap: int = ASSIGNMENT_CAP) -> float:
    """W2 between two equal-size empirical measures via exact optimal assignment."""
    return math.sqrt(empirical_w2_sq(p_samples, q_samples, metric, cap))


def empirical_w2_sq(p_samples: list[SegmentPath], q_samples: list[SegmentPath], metric,
                    cap: int = ASSIGNMENT_CAP) -> float:
    """Squared W2 (mean optimal assignment cost), without a sqrt round trip."""
    n = len(p_samples)
    if n != len(q_samples):
        raise DomainError(f"sample counts differ ({n} vs {len(q_samples)})")
    if n == 0:
        raise DomainError("no samples")
    if n > cap:
        raise SizeError(f"{n} samples exceed the exact-assignment cap {cap}; subsample first")
    cost = cost_matrix(p_samples, q_samples, metric)
    rows, cols = linear_sum_assignment(cost)
    return max(float(cost[rows, cols].sum()) / n, 0.0)


def brute_force_assignment_cost(cost: np.ndarray) -> float:
    """Minimum mean assignment cost by enumerating all permutations (small n only)."""
    n = cost.shape[0]
    idx = np.arange(n)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        best = min(best, float(cost[idx, list(perm)].sum()))
    return best / n


# ---------------------------------------------------------------------------
# verdict

@dataclass
class TciVerdict:
    metric: PathMetric
    entropy: Estimate
    coupling_sq: Estimate
    theoretical_c: ConstantsReport
    ratio: float
    empirical_w2: float | None
    passed: bool

    def to_dict(self) -> dict:
        return {
            "metric": self.metric.value,
            "entropy": self.entropy.to_dict(),
            "coupling_sq": self.coupling_sq.to_dict(),
            "ratio": self.ratio if math.isfinite(self.ratio) else None,
            "c_metric": self.theoretical_c.c_metric,
            "empirical_w2": self.empirical_w2,
            "passed": self.passed,
            "constants": self.theoretical_c.to_dict(),
        }


def tci_holds(entropy: Estimate, coupling: Estimate, c: float) -> bool:
    if entropy.mean == 0.0 and coupling.mean == 0.0:
        return True
    return coupling.upper <= 2.0 * c * entropy.lower


def verdict_from_ensemble(ensemble, constants: ConstantsReport, empirical: float | None = None) -> TciVerdict:
    metric = constants.metric
    H = entropy_from_energies(ensemble.energies)
    D = coupling_distance_sq(ensemble.squared_distances(metric))
    ratio = D.mean / (2.0 * H.mean) if H.mean > 0 else (0.0 if D.mean == 0 else math.inf)
    return TciVerdict(metric, H, D, constants, ratio, empirical, tci_holds(H, D, constants.c_metric))


def verify_tci(model: NeutralModel, xi, h, metric, grid, n_paths: int, seed: int, workers: int | None = None,
               epsilon: float | None = None, t_independent: bool = False, w2: str | None = None,
               w2_samples: int = ASSIGNMENT_CAP) -> TciVerdict:
    """Run the coupled ensemble and compare E d^2(X, Y) against 2 C H.

    ``w2='coupled'`` attaches the empirical W2 between the perturbed and the
    coupled unperturbed samples; ``'independent'`` uses unperturbed paths
    simulated on fresh streams.
    """
    from .simulate import EnsembleJob, run_ensemble, simulate_many

    metric = PathMetric.parse(metric)
    constants = assemble_constants(model, metric, grid.horizon, epsilon, t_independent, grid.tau)
    keep = min(n_paths, w2_samples) if w2 else 0
    job = EnsembleJob(model, xi, h, grid, (metric,))
    ens = run_ensemble(job, n_paths, seed, workers, keep_paths=keep)
    emp = None
    if w2:
        xs = [s.x for s in ens.kept]
        if w2 == "coupled":
            ys = [s.y for s in ens.kept]
        elif w2 == "independent":
            ys = simulate_many(model, xi, grid, seed, [INDEPENDENT_STREAM_OFFSET + i for i in range(keep)])
        else:
            raise ConfigError(f"unknown empirical W2 reference {w2!r}")
        emp = empirical_w2(xs, ys, metric)
    return verdict_from_ensemble(ens, constants, emp)


INDEPENDENT_STREAM_OFFSET = 1 << 40
