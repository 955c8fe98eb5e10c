"""Start ATI from partly correct assignments and track assignment accuracy per iteration."""
import argparse

import numpy as np

from openset_da.ati import AtiConfig, run_ati, seed_assignments

from _common import synthetic, table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--rotation", type=float, default=45.0)
    args = ap.parse_args()
    rows = []
    for frac in np.round(np.arange(0.1, 1.01, 0.1), 1):
        first, last, iters = [], [], []
        for seed in range(args.seeds):
            src, tgt, cat, truth = synthetic(seed, 0.0, n_source_unknown=0, n_target_unknown=0,
                                             rotation=args.rotation)
            init = seed_assignments(tgt, truth, float(frac), seed, cat)
            res = run_ati(src, tgt, AtiConfig(variant="ATI", seed=seed), cat, truth, init)
            first.append(res.history[0].assignment_accuracy)
            last.append(res.history[-1].assignment_accuracy)
            iters.append(len(res.history))
        rows.append((frac, f"{100 * np.mean(first):.1f}", f"{100 * np.mean(last):.1f}",
                     f"{np.mean(iters):.1f}"))
    table(("correct at start", "iter 1 acc", "final acc", "iterations"), rows)


if __name__ == "__main__":
    main()
