"""Regenerate data/synthetic_mev_trace.csv (log-normal values, median 100)."""
import csv
import sys

import numpy as np


def main(path="data/synthetic_mev_trace.csv", n=2000, seed=7):
    rng = np.random.default_rng(seed)
    values = np.exp(rng.normal(np.log(100), 0.9, n))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "value"])
        for i, v in enumerate(values, 1):
            w.writerow([i, f"{v:.4f}"])


if __name__ == "__main__":
    main(*sys.argv[1:2])
