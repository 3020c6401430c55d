"""Mean displacement across beta on a 2-d box: where D ~ N turns into D ~ 1/beta."""
import argparse

import numpy as np

from srplab.core import LatticeBox, ModelParams
from srplab.mcmc import run_chain


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--side", type=int, default=5)
    ap.add_argument("--samples", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=10)
    args = ap.parse_args()

    N = args.side
    box = LatticeBox(2, N)
    print(f"{'beta':>7} {'D':>8} {'se':>8} {'D/N':>7} {'beta*D':>7} {'longest':>8}")
    for beta in np.geomspace(0.01, 4, 15):
        s = run_chain(ModelParams(float(beta), box), None, args.samples, 10, args.seed)
        print(f"{beta:7.3f} {s.displacement_mean:8.4f} {s.displacement_se:8.1e} "
              f"{s.displacement_mean / N:7.3f} {beta * s.displacement_mean:7.3f} "
              f"{s.longest_cycle_samples.mean():8.2f}")


if __name__ == "__main__":
    main()
