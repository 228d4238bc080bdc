#!/usr/bin/env python3
"""Tabulate the best size-I Hellinger approximation error of each 1D synthetic truth.

Prints error and error * I^r for doubling I, together with the empirical
exponent from a log-log fit. Useful for checking which truths have the
approximation exponent their name suggests.
"""

import argparse

from adapart.rates import fit_rate_exponent
from adapart.synthetic import TruthSpec, best_approximation_error, make_truth

TRUTHS = [
    TruthSpec("holder_1d", {"beta": 1.0, "L": 1.0}),
    TruthSpec("holder_1d", {"beta": 0.5, "L": 1.0}),
    TruthSpec("bounded_variation_1d"),
    TruthSpec("haar_sparse", {"levels": 8, "decay": 1.0}),
]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-size", type=int, default=128)
    ap.add_argument("--weights", choices=["optimal", "mass"], default="optimal")
    args = ap.parse_args()

    sizes = []
    I = 2
    while I <= args.max_size:
        sizes.append(I)
        I *= 2
    for spec in TRUTHS:
        truth = make_truth(spec)
        errs = [best_approximation_error(truth, I, weights=args.weights) for I in sizes]
        print(f"{spec.family} {spec.params}  nominal r = {truth.nominal_r}")
        print("  I\terror\t\terror*I^r")
        for I, e in zip(sizes, errs):
            print(f"  {I}\t{e:.6f}\t{e * I**truth.nominal_r:.4f}")
        positive = [(I, e) for I, e in zip(sizes, errs) if e > 0]
        if len(positive) >= 3:
            print(f"  fitted exponent {-fit_rate_exponent(positive).slope:.3f}")
        print()


if __name__ == "__main__":
    main()
