"""Neutral-term smallness value for the Galerkin heat example over a range of
horizons and kernel amplitudes, with the largest admissible rho3."""

import argparse

import numpy as np

from neutral_tci.galerkin import HeatExampleSpec, assemble_spde_constants, build_heat_example, check_smallness
from neutral_tci.transport import InfeasibleError


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--K", type=int, default=16)
    ap.add_argument("--horizons", type=float, nargs="+", default=[0.5, 1.0, 2.0, 5.0, 10.0])
    ap.add_argument("--amplitudes", type=float, nargs="+", default=[0.05, 0.1, 0.2])
    args = ap.parse_args()

    print("amplitude   T      rho3      value    rho3 threshold   C")
    for amp in args.amplitudes:
        hm = build_heat_example(HeatExampleSpec(amplitude=amp), args.K)
        for T in args.horizons:
            rep = check_smallness(hm, T)
            try:
                c = f"{assemble_spde_constants(hm, T).c_metric:.4g}"
            except InfeasibleError:
                c = "infeasible"
            print(f"{amp:9.3f} {T:5.1f}  {hm.rho3:8.5f}  {rep.value:8.4f}  {rep.threshold_rho3:14.5f}   {c}")
    print(f"kernel energy N(K) for K = {args.K}: {HeatExampleSpec().kernel_energy(args.K):.6f} "
          f"(limit pi^2/200 = {np.pi**2 / 200:.6f} at amplitude 0.1)")


if __name__ == "__main__":
    main()
