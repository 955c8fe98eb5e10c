"""How ATI-lambda and the baseline react to a growing share of target unknowns."""
import argparse

from openset_da.ati import AtiConfig
from openset_da.pipeline import adapt_and_classify, baseline
from openset_da.svm import SvmConfig

from _common import summary, synthetic, table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ratios", default="0.1,0.25,0.5,1.0,1.5,2.0")
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    rows = []
    for ratio in (float(r) for r in args.ratios.split(",")):
        ours, star, base = [], [], []
        for seed in range(args.seeds):
            src, tgt, cat, truth = synthetic(seed, ratio)
            run = adapt_and_classify(src, tgt, cat, AtiConfig(seed=seed), SvmConfig(), truth)
            ours.append(run.report.overall_accuracy)
            star.append(adapt_and_classify(src, tgt, cat, AtiConfig(seed=seed), SvmConfig(),
                                           truth, "OS_STAR").report.overall_accuracy)
            base.append(baseline(src, tgt, cat, SvmConfig(), "s", truth).report.overall_accuracy)
        rows.append((ratio, summary(ours), summary(star), summary(base)))
    table(("unknown/known", "ATI OS", "ATI OS*", "LSVM OS"), rows)


if __name__ == "__main__":
    main()
