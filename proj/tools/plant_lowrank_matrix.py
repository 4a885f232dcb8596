#!/usr/bin/env python3
"""Writes a text matrix (rows cols, then entries) with a planted rank plus unit Gaussian noise."""

import argparse

import numpy as np


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    ap.add_argument("--rows", type=int, default=100)
    ap.add_argument("--cols", type=int, default=200)
    ap.add_argument("--rank", type=int, default=10)
    ap.add_argument("--snr", type=float, default=10.0, help="per-entry signal variance over noise variance")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    signal = np.zeros((args.rows, args.cols))
    if args.rank > 0:
        a = rng.standard_normal((args.rows, args.rank))
        b = rng.standard_normal((args.cols, args.rank))
        signal = a @ b.T * np.sqrt(args.snr / args.rank)
    m = signal + rng.standard_normal((args.rows, args.cols))
    with open(args.out, "w") as f:
        f.write(f"{args.rows} {args.cols}\n")
        for row in m:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


if __name__ == "__main__":
    main()
