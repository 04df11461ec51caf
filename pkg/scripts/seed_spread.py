"""Spread of the fig2/fig3 estimates over many seeds (how often each tolerance holds)."""

import argparse

import numpy as np

from pbvcharge.config import load_config, parse_config
from pbvcharge.reproduce import run_reproduction


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--seeds", type=int, default=40)
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else parse_config("rates: {k_repump: 0.05}")

    slope, e2, e3 = [], [], []
    for s in range(args.seeds):
        r2 = run_reproduction("fig2", cfg, s).stages["fig2"].records
        r3 = run_reproduction("fig3", cfg, s).stages["fig3"].records
        slope.append(r2["linear"]["slope"])
        e2.append(r2["power_law"]["exponent"])
        e3.append(r3["power_law"]["exponent"])
    slope, e2, e3 = map(np.array, (slope, e2, e3))
    k1 = cfg.rates.k_shelve
    ok2 = (np.abs(slope / k1 - 1) <= 0.1) & (np.abs(e2 - cfg.rates.shelve_exponent) <= 0.1)
    print(f"fig2 slope {slope.mean():.2f} +/- {slope.std():.2f}, exponent {e2.mean():.3f} +/- {e2.std():.3f}; "
          f"both within tolerance in {ok2.mean():.1%} of seeds")
    ok3 = np.abs(e3 - cfg.rates.repump_exponent) <= 0.15
    print(f"fig3 exponent {e3.mean():.3f} +/- {e3.std():.3f}; within 0.15 in {ok3.mean():.1%} of seeds")


if __name__ == "__main__":
    main()
