#!/usr/bin/env python3
"""Sheaf precompute cost versus graph size, and its independence from epochs.

The connection sheaf is built once before training, so its cost should grow
roughly linearly with the node count (one thin SVD per node and per edge)
while the per-epoch cost is unaffected by the build. This script prints both
trends on synthetic graphs of increasing size.
"""

import argparse
import time

import numpy as np

from sheaflab import build_connection_sheaf, synth_sbm
from sheaflab.model import TrainConfig, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[250, 500, 1000, 2000, 4000])
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'n':>6s} {'edges':>8s} {'build_s':>10s} {'build_s/n':>11s} {'epoch_ms':>10s}")
    for n in args.sizes:
        ds = synth_sbm(n, 2, 16.0 / n, 2.0 / n, 4, 2.0, seed=args.seed)
        best = np.inf
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            build_connection_sheaf(ds.graph, args.d)
            best = min(best, time.perf_counter() - t0)
        cfg = TrainConfig(d=args.d, epochs=args.epochs, patience=0, seed=args.seed)
        _, hist = train(ds, "connection", cfg, 0)
        epoch_ms = 1000 * float(np.mean(hist["epoch_seconds"]))
        print(
            f"{n:6d} {ds.graph.num_edges:8d} {best:10.4f} {best / n:11.2e} {epoch_ms:10.2f}"
        )


if __name__ == "__main__":
    main()
