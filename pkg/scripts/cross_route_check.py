"""Compare exact, kernel-expansion and Gaussian-moment log E at d = 1 over N."""
import argparse
import math

from srplab.core import LatticeBox
from srplab.gaussian import estimate_moment
from srplab.kernel import kernel_logE
from srplab.permanent import log_partition


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--beta", type=float, default=0.5)
    ap.add_argument("--max-side", type=int, default=20)
    ap.add_argument("--samples", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    print(f"{'N':>3} {'exact':>14} {'kernel':>14} {'gaussian':>14} {'se':>9}")
    for N in range(2, args.max_side + 1):
        exact = N * math.log(2) + log_partition(LatticeBox(1, N), args.beta).log_magnitude
        kern = kernel_logE(args.beta, N).log_E
        if N <= 12:
            est = estimate_moment(LatticeBox(1, N), args.beta, args.samples, args.seed + N)
            g, se = f"{est.log_mean:14.8f}", f"{est.se_of_log:9.2e}"
        else:
            g, se = f"{'-':>14}", f"{'-':>9}"
        print(f"{N:3d} {exact:14.8f} {kern:14.8f} {g} {se}")


if __name__ == "__main__":
    main()
