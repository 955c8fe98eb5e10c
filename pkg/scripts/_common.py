"""Shared setup for the experiment scripts: synthetic data and a tiny table printer."""
from __future__ import annotations

import numpy as np

from openset_da.dataset import AffineShift, ClassCatalog, synth_shift, truth_labels


def synthetic(seed: int, unknown_ratio: float = 0.5, n_classes: int = 3, per_class: int = 100,
              dim: int = 10, rotation: float = 20.0, translation: float = 5.0, **kw):
    shift = AffineShift.rotation_translation(dim, rotation, translation, seed=seed)
    src, tgt, gt = synth_shift(n_classes, per_class, dim, shift, unknown_ratio, seed=seed, **kw)
    cat = ClassCatalog.from_labels(src.labels)
    return src, tgt, cat, truth_labels(tgt, gt, cat)


def summary(values) -> str:
    v = np.asarray(values, dtype=float)
    std = v.std(ddof=1) if len(v) > 1 else 0.0
    return f"{100 * v.mean():6.2f} +- {100 * std:5.2f}"


def table(header, rows) -> None:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    for row in [header, *rows]:
        print("  ".join(str(x).rjust(w) for x, w in zip(row, widths)))
