"""Accuracy of ATI-lambda and the source-only SVM as the number of target samples shrinks."""
import argparse

from openset_da.ati import AtiConfig
from openset_da.dataset import subsample
from openset_da.pipeline import adapt_and_classify, baseline
from openset_da.svm import SvmConfig

from _common import summary, synthetic, table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="20,50,100,200,300,450")
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    rows = []
    for n in (int(s) for s in args.sizes.split(",")):
        ours, base = [], []
        for seed in range(args.seeds):
            src, tgt, cat, truth = synthetic(seed)
            sub = subsample(tgt, total=n, seed=seed)
            pos = {i: k for k, i in enumerate(tgt.ids)}
            t_sub = [truth[pos[i]] for i in sub.ids]
            ours.append(adapt_and_classify(src, sub, cat, AtiConfig(seed=seed), SvmConfig(),
                                           t_sub).report.overall_accuracy)
            base.append(baseline(src, sub, cat, SvmConfig(), "s", t_sub).report.overall_accuracy)
        rows.append((n, summary(ours), summary(base)))
    table(("targets", "ATI-lambda", "LSVM"), rows)


if __name__ == "__main__":
    main()
