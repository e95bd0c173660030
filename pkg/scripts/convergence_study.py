"""Strong convergence of the Euler scheme on OU against exact sampling, and
the dt-bias of the noise-free coupled difference in the L2 metric."""

import argparse
import math

import numpy as np

from neutral_tci import builtins
from neutral_tci.pathspace import PathMetric, TimeGrid
from neutral_tci.simulate import EnsembleJob, ExplicitNoise, constant_perturbation, run_ensemble, simulate


def exact_pairs(rng, n_paths, n_fine, h):
    cov = np.array([[h, -math.expm1(-h)], [-math.expm1(-h), -math.expm1(-2 * h) / 2]])
    pairs = rng.standard_normal((n_paths, n_fine, 2)) @ np.linalg.cholesky(cov).T
    return pairs[..., 0], pairs[..., 1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=1000)
    ap.add_argument("--levels", type=int, nargs="+", default=[32, 64, 128, 256, 512])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    model = builtins.ou(tau=0.25)
    fine = max(args.levels)
    dW, I = exact_pairs(np.random.default_rng(args.seed), args.paths, fine, 1.0 / fine)
    exact = math.exp(-1.0) + I @ np.exp(-(1.0 - np.arange(1, fine + 1) / fine))
    closed = -0.5 + 2 * math.exp(-1) - 0.5 * math.exp(-2)

    prev = None
    print("steps   RMS endpoint error   ratio   L2 coupling bias")
    for steps in sorted(args.levels):
        grid = TimeGrid(0.25, 1.0, 1.0 / steps)
        agg = fine // steps
        ends = np.array([simulate(model, 1.0, grid, ExplicitNoise(dW[i].reshape(steps, agg).sum(1)[:, None]))
                         .values[-1, 0] for i in range(args.paths)])
        err = math.sqrt(np.mean((ends - exact) ** 2))
        ens = run_ensemble(EnsembleJob(model, 0.0, constant_perturbation(1.0), grid, (PathMetric.L2_IN_TIME,)),
                           2, args.seed, workers=1)
        bias = float(np.mean(ens.squared_distances("l2"))) - closed
        ratio = f"{prev / err:6.3f}" if prev else "     -"
        print(f"{steps:5d}   {err:18.3e}   {ratio}   {bias:+.3e}")
        prev = err


if __name__ == "__main__":
    main()
