"""Accuracy and rejected share over rho, with and without the per-class coverage constraint."""
import argparse

import numpy as np

from openset_da.ati import AtiConfig
from openset_da.pipeline import adapt_and_classify
from openset_da.svm import SvmConfig

from _common import summary, synthetic, table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--ratio", type=float, default=0.5)
    args = ap.parse_args()
    rows = []
    for rho in np.round(np.arange(0.1, 1.01, 0.1), 2):
        cells = [rho]
        for coverage in (True, False):
            acc, rejected = [], []
            for seed in range(args.seeds):
                src, tgt, cat, truth = synthetic(seed, args.ratio)
                cfg = AtiConfig(rho=float(rho), coverage=coverage, seed=seed)
                run = adapt_and_classify(src, tgt, cat, cfg, SvmConfig(), truth)
                acc.append(run.report.overall_accuracy)
                rejected.append(run.ati.history[-1].n_outliers / len(tgt))
            cells += [summary(acc), f"{100 * np.mean(rejected):5.1f}%"]
        rows.append(cells)
    table(("rho", "acc", "rejected", "acc (no cov.)", "rejected (no cov.)"), rows)


if __name__ == "__main__":
    main()
