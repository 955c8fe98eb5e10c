"""End-to-end runs: adaptation + classification, and the no-adaptation baselines."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ati import AtiConfig, AtiResult, run_ati
from .dataset import ClassCatalog, Dataset
from .errors import ConfigError
from .evaluate import EvalReport, score
from .svm import OvoModel, SvmConfig, predict, train_ovo

BASELINE_MODES = ("s", "st", "t")


@dataclass
class RunOutput:
    predictions: list
    model: OvoModel
    report: EvalReport | None
    ati: AtiResult | None = None


def _labeled_targets(target: Dataset) -> Dataset | None:
    idx = target.labeled_indices
    if len(idx) == 0:
        return None
    sub = target.take(idx)
    return Dataset(sub.X, sub.labels, "source", tuple(f"L:{i}" for i in sub.ids))


def _stack(*parts: Dataset) -> Dataset:
    parts = [p for p in parts if p is not None]
    X = np.vstack([p.X for p in parts])
    labels = sum((p.labels for p in parts), ())
    ids = sum((p.ids for p in parts), ())
    return Dataset(X, labels, "source", ids)


def adapt_and_classify(source: Dataset, target: Dataset, catalog: ClassCatalog,
                       ati_cfg: AtiConfig = AtiConfig(), svm_cfg: SvmConfig = SvmConfig(),
                       truth: list | None = None, protocol: str = "OS",
                       initial_labels=None) -> RunOutput:
    """Run ATI, train one-vs-one SVMs on the mapped source (plus labeled
    targets) and label every target row."""
    result = run_ati(source, target, ati_cfg, catalog, truth, initial_labels)
    train = _stack(result.adapted, _labeled_targets(target))
    model = train_ovo(train, svm_cfg, catalog)
    pred = predict(model, target)
    report = score(pred, truth, catalog, protocol) if truth is not None else None
    return RunOutput(pred, model, report, result)


def baseline(source: Dataset, target: Dataset, catalog: ClassCatalog,
             svm_cfg: SvmConfig = SvmConfig(), mode: str = "st", truth: list | None = None,
             protocol: str = "OS") -> RunOutput:
    """Linear SVMs without adaptation: source only ("s"), source plus labeled
    targets ("st") or labeled targets only ("t")."""
    if mode not in BASELINE_MODES:
        raise ConfigError(f"baseline mode must be one of {BASELINE_MODES}")
    lt = _labeled_targets(target)
    if mode == "t":
        if lt is None:
            raise ConfigError("target-only baseline needs labeled target rows")
        train = lt
    elif mode == "st":
        train = _stack(source, lt)
    else:
        train = source
    model = train_ovo(train, svm_cfg, catalog)
    pred = predict(model, target)
    report = score(pred, truth, catalog, protocol) if truth is not None else None
    return RunOutput(pred, model, report)
