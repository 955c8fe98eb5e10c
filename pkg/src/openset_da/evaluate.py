"""Scoring under the closed-set (CS) and open-set (OS, OS*) protocols."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import ClassCatalog
from .errors import ProtocolError

PROTOCOLS = ("CS", "OS", "OS_STAR")
_ALIASES = {"cs": "CS", "os": "OS", "os-star": "OS_STAR", "os*": "OS_STAR", "os_star": "OS_STAR"}


def parse_protocol(name: str) -> str:
    key = name.strip()
    if key in PROTOCOLS:
        return key
    try:
        return _ALIASES[key.lower()]
    except KeyError:
        raise ProtocolError(f"unknown protocol {name!r}") from None


@dataclass(frozen=True)
class EvalReport:
    protocol: str
    classes: tuple  # row/column order of the confusion matrix, unknown last
    confusion: np.ndarray  # [true, predicted]
    overall_accuracy: float
    mean_class_accuracy: float
    n_evaluated: int

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
            "overall_accuracy": self.overall_accuracy,
            "mean_class_accuracy": self.mean_class_accuracy,
            "n_evaluated": self.n_evaluated,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def confusion_to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\pred"] + list(self.classes))
            for name, row in zip(self.classes, self.confusion):
                w.writerow([name] + [int(v) for v in row])

    def confusion_to_plot_data(self, path) -> None:
        """Whitespace matrix, one ``row col value`` triple per line, blank line per row."""
        lines = []
        for r, row in enumerate(self.confusion):
            for c, v in enumerate(row):
                lines.append(f"{r} {c} {int(v)}")
            lines.append("")
        Path(path).write_text("\n".join(lines) + "\n")


def score(pred, truth, catalog: ClassCatalog, protocol: str = "OS") -> EvalReport:
    protocol = parse_protocol(protocol)
    pred, truth = list(pred), list(truth)
    if len(pred) != len(truth):
        raise ValueError(f"{len(pred)} predictions for {len(truth)} ground-truth labels")
    classes = catalog.shared_classes + (catalog.unknown_id,)
    index = {c: k for k, c in enumerate(classes)}
    unk = catalog.unknown_id
    if protocol == "CS" and any(t == unk for t in truth):
        raise ProtocolError("closed-set scoring with unknown ground-truth labels present")
    for lab in pred + truth:
        if lab not in index:
            raise ProtocolError(f"label {lab!r} not in catalog")
    keep = [k for k, t in enumerate(truth) if protocol == "OS" or t != unk]
    conf = np.zeros((len(classes), len(classes)), dtype=int)
    for k in keep:
        conf[index[truth[k]], index[pred[k]]] += 1
    n = int(conf.sum())
    overall = float(np.trace(conf) / n) if n else float("nan")
    rows = conf.sum(axis=1)
    nz = rows > 0
    per_class = np.diag(conf)[nz] / rows[nz]
    mca = float(per_class.mean()) if nz.any() else float("nan")
    return EvalReport(protocol, classes, conf, overall, mca, n)


def aggregate(reports) -> dict:
    """Mean and sample standard deviation (n-1) of the accuracies over runs."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to aggregate")
    protocols = {r.protocol for r in reports}
    if len(protocols) != 1:
        raise ProtocolError(f"mixed protocols {sorted(protocols)}")
    out = {"protocol": reports[0].protocol, "n_runs": len(reports)}
    for key in ("overall_accuracy", "mean_class_accuracy"):
        vals = np.array([getattr(r, key) for r in reports], dtype=float)
        out[key] = {
            "mean": float(vals.mean()),
            "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
            "min": float(vals.min()),
            "max": float(vals.max()),
        }
    return out
