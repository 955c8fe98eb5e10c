"""Feature datasets, class catalogs, open-set splits and synthetic test beds.

Feature files are headerless CSV rows ``id,label,f1,...,fD``; the label is
empty for unlabeled target rows.  Ground-truth sidecars are ``id,true_label``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    CoverageError,
    DataError,
    DimensionError,
    FormatError,
    LabelError,
    ProtocolError,
    SamplingError,
)
from .seeding import stream

UNKNOWN = "__unknown__"
ROLES = ("source", "target")


@dataclass(frozen=True)
class ClassCatalog:
    """Shared classes plus the distinguished unknown class (always last).

    ``open_set=False`` drops the unknown class from :attr:`classes`, which is
    what the closed-set protocol needs.
    """

    shared_classes: tuple[str, ...]
    unknown_id: str = UNKNOWN
    open_set: bool = True

    def __post_init__(self):
        shared = tuple(str(c) for c in self.shared_classes)
        object.__setattr__(self, "shared_classes", shared)
        if len(set(shared)) != len(shared):
            raise LabelError("duplicate class identifiers in catalog")
        if self.unknown_id in shared:
            raise LabelError(f"unknown id {self.unknown_id!r} listed as a shared class")
        if not shared:
            raise LabelError("catalog needs at least one shared class")

    @property
    def classes(self) -> tuple[str, ...]:
        if self.open_set:
            return self.shared_classes + (self.unknown_id,)
        return self.shared_classes

    def __len__(self) -> int:
        return len(self.classes)

    def __contains__(self, label) -> bool:
        return label in self.classes

    def index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise LabelError(f"label {label!r} not in catalog") from None

    @property
    def unknown_index(self) -> int | None:
        return len(self.shared_classes) if self.open_set else None

    def to_catalog_label(self, original: str) -> str:
        """Map an original fine-grained label onto the catalog (non-shared -> unknown)."""
        return original if original in self.shared_classes else self.unknown_id

    @classmethod
    def from_labels(cls, labels: Iterable[str | None], unknown_id: str = UNKNOWN,
                    open_set: bool | None = None) -> "ClassCatalog":
        seen = {l for l in labels if l is not None}
        shared = tuple(sorted(seen - {unknown_id}))
        if open_set is None:
            open_set = unknown_id in seen
        return cls(shared, unknown_id, open_set)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    labels: tuple
    role: str = "source"
    ids: tuple = field(default=None)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        if X.ndim != 2:
            raise DimensionError(f"feature matrix must be 2-D, got shape {X.shape}")
        if X.shape[1] < 1:
            raise DimensionError("dimensionality must be at least 1")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite feature value")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        labels = tuple(None if (l is None or l == "") else str(l) for l in self.labels)
        if len(labels) != X.shape[0]:
            raise FormatError(f"{len(labels)} labels for {X.shape[0]} samples")
        object.__setattr__(self, "labels", labels)
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        if self.role == "source" and any(l is None for l in labels):
            raise LabelError("source datasets must be fully labeled")
        ids = self.ids
        if ids is None:
            ids = tuple(str(i) for i in range(X.shape[0]))
        ids = tuple(str(i) for i in ids)
        if len(ids) != X.shape[0]:
            raise FormatError("one id per sample required")
        if len(set(ids)) != len(ids):
            raise FormatError("sample ids must be unique")
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def labeled_indices(self) -> np.ndarray:
        return np.array([i for i, l in enumerate(self.labels) if l is not None], dtype=int)

    def validate(self, catalog: ClassCatalog | None = None) -> None:
        """Re-check type invariants; with a catalog, every label must be in it."""
        if not np.all(np.isfinite(self.X)):
            raise DataError("non-finite feature value")
        if catalog is not None:
            for l in self.labels:
                if l is not None and l not in catalog:
                    raise LabelError(f"label {l!r} not in catalog")

    def label_indices(self, catalog: ClassCatalog) -> np.ndarray:
        """Catalog index per sample, -1 where unlabeled."""
        return np.array([-1 if l is None else catalog.index(l) for l in self.labels], dtype=int)

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.X[idx], tuple(self.labels[i] for i in idx), self.role,
                       tuple(self.ids[i] for i in idx))

    def with_features(self, X) -> "Dataset":
        return Dataset(X, self.labels, self.role, self.ids)

    def with_labels(self, labels, role: str | None = None) -> "Dataset":
        return Dataset(self.X, tuple(labels), role or self.role, self.ids)

    def unlabeled(self) -> "Dataset":
        return Dataset(self.X, (None,) * len(self), "target", self.ids)


@dataclass(frozen=True)
class MeanTable:
    catalog: ClassCatalog
    means: np.ndarray  # (|C|, D), catalog order

    def __post_init__(self):
        m = np.array(self.means, dtype=np.float64, copy=True)
        m.setflags(write=False)
        object.__setattr__(self, "means", m)
        if m.shape[0] != len(self.catalog):
            raise DimensionError("one mean per catalog class required")


# --- I/O -------------------------------------------------------------------

def load_features(path, role: str = "source", catalog: ClassCatalog | None = None,
                  strict: bool = True) -> Dataset:
    path = Path(path)
    ids, labels, rows = [], [], []
    width = None
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 3:
                raise FormatError(f"{path}:{lineno}: expected id,label,f1..fD")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FormatError(f"{path}:{lineno}: row has {len(row)} fields, expected {width}")
            try:
                values = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{path}:{lineno}: non-finite feature value")
            label = row[1].strip()
            if label == "":
                if role == "source":
                    raise LabelError(f"{path}:{lineno}: source row without label")
                label = None
            elif strict and catalog is not None and label not in catalog:
                raise LabelError(f"{path}:{lineno}: label {label!r} not in catalog")
            ids.append(row[0].strip())
            labels.append(label)
            rows.append(values)
    if not rows:
        raise FormatError(f"{path}: no samples")
    return Dataset(np.array(rows), tuple(labels), role, tuple(ids))


def save_features(ds: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for i, x in enumerate(ds.X):
            w.writerow([ds.ids[i], ds.labels[i] or ""] + [repr(float(v)) for v in x])


def load_ground_truth(path) -> dict[str, str]:
    truth = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"{path}:{lineno}: expected id,true_label")
            truth[row[0].strip()] = row[1].strip()
    return truth


def save_ground_truth(truth: dict[str, str], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for k, v in truth.items():
            w.writerow([k, v])


def truth_labels(target: Dataset, truth: dict[str, str], catalog: ClassCatalog) -> list[str]:
    """Catalog-level true label for every target row, in row order."""
    try:
        return [catalog.to_catalog_label(truth[i]) for i in target.ids]
    except KeyError as exc:
        raise LabelError(f"no ground truth for target id {exc.args[0]!r}") from None


# --- statistics --------------------------------------------------------------

def _canonical_sum(rows: np.ndarray) -> np.ndarray:
    # lexicographic row order + pairwise reduction over a contiguous axis
    order = np.lexsort(rows.T[::-1])
    return np.ascontiguousarray(rows[order].T).sum(axis=1)


def class_means(source: Dataset, catalog: ClassCatalog) -> MeanTable:
    idx = source.label_indices(catalog)
    if np.any(idx < 0):
        raise LabelError("class_means needs a fully labeled dataset")
    means = np.empty((len(catalog), source.dim))
    for c, name in enumerate(catalog.classes):
        rows = source.X[idx == c]
        if rows.shape[0] == 0:
            raise CoverageError(f"class {name!r} has no samples")
        means[c] = _canonical_sum(rows) / rows.shape[0]
    return MeanTable(catalog, means)


# --- splits and sampling --------------------------------------------------------

def parse_range(spec) -> tuple[int, ...]:
    """'11-20' -> (11, ..., 20); '' or None -> (); also accepts int sequences."""
    if spec is None:
        return ()
    if isinstance(spec, str):
        out = []
        for part in spec.replace(" ", "").split(","):
            if not part:
                continue
            if "-" in part:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        return tuple(out)
    return tuple(int(v) for v in spec)


def make_open_set_split(pool: Dataset, n_shared: int, src_unknown_range, tgt_unknown_range,
                        seed: int, target_pool: Dataset | None = None,
                        source_per_class: int | None = None,
                        target_per_class: int | None = None,
                        unknown_id: str = UNKNOWN):
    """Build the source/target open-set protocol from labeled pools.

    Class positions are 1-based over the alphabetically sorted class names.
    Classes ``1..n_shared`` are shared, ``src_unknown_range`` become the
    source unknown class, ``tgt_unknown_range`` appear only in the target.
    With a single pool, each shared class is split in half between source
    and target.  Per-class subsampling is applied per fine-grained class,
    unknown ranges included.

    Returns ``(source, target, ground_truth)``; the target is unlabeled and
    ``ground_truth`` maps target ids to their original labels.
    """
    names = sorted({l for l in pool.labels if l is not None}
                   | ({l for l in target_pool.labels if l is not None} if target_pool else set()))
    shared_pos = tuple(range(1, n_shared + 1))
    src_pos = parse_range(src_unknown_range)
    tgt_pos = parse_range(tgt_unknown_range)
    groups = {"shared": shared_pos, "source-unknown": src_pos, "target-unknown": tgt_pos}
    all_pos = shared_pos + src_pos + tgt_pos
    if len(set(all_pos)) != len(all_pos):
        raise ProtocolError("shared / source-unknown / target-unknown ranges overlap")
    if n_shared < 1:
        raise ProtocolError("at least one shared class is required")
    bad = [p for p in all_pos if p < 1 or p > len(names)]
    if bad:
        raise ProtocolError(f"class positions {bad} outside 1..{len(names)}")
    shared = [names[p - 1] for p in groups["shared"]]
    src_unk = {names[p - 1] for p in groups["source-unknown"]}
    tgt_unk = {names[p - 1] for p in groups["target-unknown"]}

    rng = stream(seed, "split")

    def rows_of(ds, name):
        return np.array([i for i, l in enumerate(ds.labels) if l == name], dtype=int)

    def pick(rows, k):
        if k is None or k == len(rows):
            return rows
        if k > len(rows):
            raise SamplingError(f"asked for {k} samples of a class with {len(rows)}")
        return np.sort(rng.choice(rows, size=k, replace=False))

    src_rows, tgt_rows = [], []
    for name in names:
        in_src = name in shared or name in src_unk
        in_tgt = name in shared or name in tgt_unk
        if not (in_src or in_tgt):
            continue
        rows = rows_of(pool, name)
        if target_pool is None and name in shared:
            perm = rows[rng.permutation(len(rows))]
            half = (len(rows) + 1) // 2
            s_part, t_part = np.sort(perm[:half]), np.sort(perm[half:])
            if len(t_part) == 0:
                raise SamplingError(f"class {name!r} too small to split between domains")
            src_rows.append(pick(s_part, source_per_class))
            tgt_rows.append(pick(t_part, target_per_class))
            continue
        if in_src:
            src_rows.append(pick(rows, source_per_class))
        if in_tgt:
            t_rows = rows if target_pool is None else rows_of(target_pool, name)
            tgt_rows.append(pick(t_rows, target_per_class))
    src_idx = np.sort(np.concatenate(src_rows)) if src_rows else np.array([], int)
    tpool = pool if target_pool is None else target_pool
    tgt_idx = np.sort(np.concatenate(tgt_rows)) if tgt_rows else np.array([], int)

    src_labels = [pool.labels[i] if pool.labels[i] in shared else unknown_id for i in src_idx]
    source = Dataset(pool.X[src_idx], tuple(src_labels), "source",
                     tuple(pool.ids[i] for i in src_idx))
    target = Dataset(tpool.X[tgt_idx], (None,) * len(tgt_idx), "target",
                     tuple(tpool.ids[i] for i in tgt_idx))
    truth = {tpool.ids[i]: tpool.labels[i] for i in tgt_idx}
    return source, target, truth


def subsample(ds: Dataset, per_class: int | None = None, total: int | None = None,
              seed: int = 0) -> Dataset:
    """Uniform subset without replacement; row order of the input is kept."""
    if (per_class is None) == (total is None):
        raise SamplingError("give exactly one of per_class / total")
    rng = stream(seed, "sample")
    if total is not None:
        if total > len(ds) or total < 0:
            raise SamplingError(f"cannot draw {total} of {len(ds)} samples")
        return ds.take(np.sort(rng.choice(len(ds), size=total, replace=False)))
    if any(l is None for l in ds.labels):
        raise SamplingError("per-class sampling needs labels on every row")
    keep = []
    for name in sorted(set(ds.labels)):
        rows = np.array([i for i, l in enumerate(ds.labels) if l == name])
        if per_class > len(rows):
            raise SamplingError(f"class {name!r} has {len(rows)} samples, {per_class} requested")
        keep.append(rng.choice(rows, size=per_class, replace=False))
    return ds.take(np.sort(np.concatenate(keep)))


# --- synthetic test bed ----------------------------------------------------

@dataclass(frozen=True)
class AffineShift:
    """x -> A x + b applied to target cluster centers."""

    matrix: np.ndarray | None = None
    offset: np.ndarray | None = None

    def apply(self, X: np.ndarray) -> np.ndarray:
        out = X if self.matrix is None else X @ np.asarray(self.matrix).T
        if self.offset is not None:
            out = out + np.asarray(self.offset)
        return out

    @classmethod
    def identity(cls) -> "AffineShift":
        return cls()

    @classmethod
    def rotation_translation(cls, dim: int, degrees: float, translation: float = 0.0,
                             seed: int = 0) -> "AffineShift":
        """Rotate by ``degrees`` in every coordinate plane (0,1), (2,3), ...
        and translate by ``translation`` along a seeded random unit direction."""
        a = math.radians(degrees)
        R = np.eye(dim)
        for i in range(0, dim - 1, 2):
            R[i, i] = R[i + 1, i + 1] = math.cos(a)
            R[i, i + 1] = -math.sin(a)
            R[i + 1, i] = math.sin(a)
        u = stream(seed, "shift-direction").standard_normal(dim)
        u /= np.linalg.norm(u)
        return cls(R, translation * u)


def _cluster_centers(n: int, dim: int, scale: float, rng) -> np.ndarray:
    # simplex vertices scale*e_i while they fit, random unit directions after
    centers = np.zeros((n, dim))
    for i in range(n):
        if i < dim:
            centers[i, i] = scale
        else:
            v = rng.standard_normal(dim)
            centers[i] = scale * v / np.linalg.norm(v)
    return centers


def synth_shift(n_classes: int, n_per_class: int, dim: int, shift: AffineShift | None = None,
                unknown_ratio: float = 0.0, seed: int = 0, scale: float = 6.0,
                n_source_unknown: int = 2, n_target_unknown: int = 3,
                unknown_radius: float = 0.5,
                source_unknown_per_cluster: int | None = None,
                unknown_id: str = UNKNOWN):
    """Gaussian clusters (unit variance) with an affine domain shift.

    Class ``k{i}`` sits at the simplex vertex ``scale * e_i``; the source
    also holds ``n_source_unknown`` clusters labeled unknown.  The target
    repeats the known clusters through ``shift`` and adds
    ``n_target_unknown`` further clusters (also shifted) holding
    ``unknown_ratio`` times as many samples as the known part.  Unknown
    clusters of both domains use their own axes at radius
    ``unknown_radius * scale``, so they stay nearer the unknown mean than
    any known class.  With ``n_source_unknown=0`` the source is closed-set.
    Returns ``(source, target, ground_truth)``.
    """
    if dim < 2 or n_classes < 2:
        raise ValueError("synth_shift needs dim >= 2 and n_classes >= 2")
    if n_per_class < 1 or unknown_ratio < 0:
        raise ValueError("n_per_class >= 1 and unknown_ratio >= 0 required")
    shift = shift or AffineShift()
    rng = stream(seed, "synth")
    n_clusters = n_classes + n_source_unknown + n_target_unknown
    centers = _cluster_centers(n_clusters, dim, scale, rng)
    centers[n_classes:] *= unknown_radius
    known_c = centers[:n_classes]
    src_unk_c = centers[n_classes:n_classes + n_source_unknown]
    tgt_unk_c = centers[n_classes + n_source_unknown:]
    names = [f"k{i}" for i in range(n_classes)]
    su = source_unknown_per_cluster or n_per_class

    sX, sL, sId = [], [], []
    for i, c in enumerate(known_c):
        sX.append(c + rng.standard_normal((n_per_class, dim)))
        sL += [names[i]] * n_per_class
    for j, c in enumerate(src_unk_c):
        sX.append(c + rng.standard_normal((su, dim)))
        sL += [unknown_id] * su
    sX = np.vstack(sX)
    sId = [f"s{i}" for i in range(len(sL))]

    tX, truth_l = [], []
    for i, c in enumerate(shift.apply(known_c)):
        tX.append(c + rng.standard_normal((n_per_class, dim)))
        truth_l += [names[i]] * n_per_class
    n_unk = int(round(unknown_ratio * n_classes * n_per_class))
    if n_unk and n_target_unknown:
        counts = np.full(n_target_unknown, n_unk // n_target_unknown)
        counts[: n_unk % n_target_unknown] += 1
        for j, c in enumerate(shift.apply(tgt_unk_c)):
            tX.append(c + rng.standard_normal((counts[j], dim)))
            truth_l += [f"u{j}"] * int(counts[j])
    tX = np.vstack(tX)
    tId = [f"t{i}" for i in range(len(truth_l))]
    source = Dataset(sX, tuple(sL), "source", tuple(sId))
    target = Dataset(tX, (None,) * len(tId), "target", tuple(tId))
    return source, target, dict(zip(tId, truth_l))
