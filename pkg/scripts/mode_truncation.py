"""Sensitivity of the SPDE coupling statistics to the number of Galerkin modes."""

import argparse
import math

import numpy as np

from neutral_tci.galerkin import HeatExampleSpec, SpdeEnsembleJob, build_heat_example
from neutral_tci.pathspace import TimeGrid
from neutral_tci.simulate import constant_perturbation, run_ensemble
from neutral_tci.transport import coupling_distance_sq, entropy_from_energies


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--modes", type=int, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--paths", type=int, default=400)
    ap.add_argument("--dt", type=float, default=1 / 32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    grid = TimeGrid(0.5, 1.0, args.dt)
    spec = HeatExampleSpec(phi="sin")
    prev = None
    print("  K   E sup d^2          CI        H       change vs previous K")
    for K in args.modes:
        hm = build_heat_example(spec, K)
        psi, h = np.zeros(K), np.zeros(K)
        psi[0], h[0] = 1.0, 0.5
        ens = run_ensemble(SpdeEnsembleJob(hm, psi, constant_perturbation(h), grid), args.paths, args.seed,
                           workers=args.workers)
        d2 = coupling_distance_sq(ens.squared_distances("inf2"))
        H = entropy_from_energies(ens.energies)
        change = "" if prev is None else (f"{d2.mean - prev.mean:+.2e} "
                                          f"(CI {math.hypot(d2.halfwidth, prev.halfwidth):.1e})")
        print(f"{K:3d}   {d2.mean:.6f}   {d2.halfwidth:.1e}   {H.mean:.4f}   {change}")
        prev = d2


if __name__ == "__main__":
    main()
