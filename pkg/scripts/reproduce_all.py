"""Run every figure pipeline from one config and write all outputs under one directory."""

import argparse
import time
from pathlib import Path

from pbvcharge.config import load_config
from pbvcharge.output import write_results
from pbvcharge.reproduce import FIGURES, run_reproduction


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(Path(__file__).resolve().parents[1] / "configs/default.yaml"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", default="out/all")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    cfg = load_config(args.config)
    total = time.perf_counter()
    for fig in FIGURES:
        bundle = run_reproduction(fig, cfg, args.seed, args.jobs)
        manifest = write_results(bundle, args.format, Path(args.out) / fig)
        print(f"{fig:10s} {bundle.timings[fig]:6.2f} s  {len(manifest['files'])} files")
    print(f"total {time.perf_counter() - total:.1f} s")


if __name__ == "__main__":
    main()
