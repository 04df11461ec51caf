"""False-positive rate of the peak detector on dark (background-only) scans."""

import argparse

import numpy as np

from pbvcharge.lineshape import LineShape
from pbvcharge.ple import detect_peak, simulate_ple_scan
from pbvcharge.pulses import scan_grid
from pbvcharge.simulate import SimSeed


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=300)
    ap.add_argument("--step", type=float, default=0.002, help="GHz")
    ap.add_argument("--dwell", type=float, default=10.0, help="ms")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    grid = scan_grid(4.5, -7.2, args.step)
    sig = []
    for k in range(args.trials):
        spec = simulate_ple_scan(LineShape(), grid, args.dwell, SimSeed(args.seed, k), occupancy=0.0)
        sig.append(detect_peak(spec).significance)
    sig = np.array(sig)
    fp = int(np.sum(sig > 3.0))
    print(f"{len(grid)} points/scan, {args.trials} dark scans: {fp} false positives "
          f"(rate {fp / args.trials:.4f}); significance median {np.median(sig):.2f}, "
          f"95th pct {np.quantile(sig, 0.95):.2f}, max {sig.max():.2f}")


if __name__ == "__main__":
    main()
