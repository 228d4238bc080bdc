#!/usr/bin/env python3
"""Run a rate experiment from a YAML config and print per-n medians and the fitted slope.

    python scripts/run_experiment.py configs/lipschitz_sieve_mle.yaml --output results/sieve
"""

import argparse
import dataclasses
import sys

from adapart.harness import load_config, run_rate_experiment


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--output", help="directory for report.tsv, manifest.json and timings.tsv")
    ap.add_argument("--replicates", type=int, help="override the configured replicate count")
    ap.add_argument("--threads", type=int, help="worker processes (default: ADAPART_THREADS or 1)")
    args = ap.parse_args()

    cfg = load_config(args.config)
    if args.output:
        cfg = dataclasses.replace(cfg, output=args.output)
    if args.replicates:
        cfg = dataclasses.replace(cfg, replicates=args.replicates)

    def progress(cell):
        print(f"n={cell.n:>7} rep={cell.replicate:>3} error={cell.error:.5f} size={cell.size}",
              file=sys.stderr)

    report = run_rate_experiment(cfg, threads=args.threads, progress=progress)
    print("n\tmedian_error")
    for n, e in report.medians:
        print(f"{n}\t{e:.6g}")
    if report.fit is not None:
        f = report.fit
        print(f"# slope {f.slope:.4f} +- {f.stderr:.4f}  (r2 {f.r2:.4f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
