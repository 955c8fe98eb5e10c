"""Assign-and-transform-iteratively driver.

Each iteration re-estimates the class means from the current (already
mapped) source, assigns targets to classes, fits a linear map on the
assigned pairs and applies it to the source.  Targets never move.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .assign import (
    Assignment,
    SolveConfig,
    build_neighbors,
    class_distances,
    compute_costs,
    lambda_from_costs,
    linear_objective,
    solve_locality,
    solve_semi_supervised,
    solve_unsupervised,
)
from .dataset import ClassCatalog, Dataset, class_means
from .errors import ConfigError, OpenSetDAError
from .seeding import stream
from .transform import Transform, apply_transform, build_pairs, estimate_transform

VARIANTS = ("ATI", "ATI_LAMBDA", "ATI_LAMBDA_NK")
_VARIANT_ALIASES = {
    "ati": ("ATI", 0),
    "ati-lambda": ("ATI_LAMBDA", 0),
    "ati-lambda-n1": ("ATI_LAMBDA_NK", 1),
    "ati-lambda-n2": ("ATI_LAMBDA_NK", 2),
}


def parse_variant(name: str) -> tuple[str, int]:
    """CLI spelling -> (variant, neighbour count)."""
    key = name.strip().lower()
    if key in _VARIANT_ALIASES:
        return _VARIANT_ALIASES[key]
    if name in VARIANTS:
        return name, 1 if name == "ATI_LAMBDA_NK" else 0
    raise ConfigError(f"unknown variant {name!r}")


@dataclass(frozen=True)
class AtiConfig:
    variant: str = "ATI_LAMBDA"
    rho: float = 0.5
    neighbor_k: int = 0
    epsilon: float = 0.01
    max_iterations: int = 10
    coverage: bool = True
    coverage_unknown: bool = True
    # pin labeled target rows to their label during assignment
    semi_supervised: bool = True
    backend: str = "auto"
    # stop once an assignment repeats; every later iteration would be a no-op
    stop_on_fixed_point: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError("rho must lie in [0, 1]")
        if self.variant == "ATI_LAMBDA_NK" and self.neighbor_k not in (1, 2):
            raise ConfigError("the locality variant needs neighbor_k in {1, 2}")
        if self.variant != "ATI_LAMBDA_NK" and self.neighbor_k != 0:
            raise ConfigError("neighbor_k is only used by ATI_LAMBDA_NK")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    lam: float
    n_assigned: int
    n_outliers: int
    objective: float
    stop_metric: float
    assignment_accuracy: float | None
    labels: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class AtiResult:
    adapted: Dataset
    transform: Transform
    history: list
    assignment: Assignment
    stop_reason: str

    def __iter__(self):
        return iter((self.adapted, self.transform, self.history))


def stop_metric(W: np.ndarray, means: np.ndarray, target_X: np.ndarray, assignment: Assignment) -> float:
    t_idx, c_idx = np.nonzero(assignment.x.T)
    if len(t_idx) == 0:
        return 0.0
    R = means[c_idx] @ W.T - target_X[t_idx]
    return math.sqrt(float(np.einsum("ij,ij->", R, R)))


def assignment_accuracy(labels: np.ndarray, truth_idx: np.ndarray | None) -> float | None:
    """Share of assigned (non-rejected) targets whose class is correct."""
    if truth_idx is None:
        return None
    keep = labels >= 0
    if not keep.any():
        return float("nan")
    return float(np.mean(labels[keep] == truth_idx[keep]))


def _fixed_labels(target: Dataset, catalog: ClassCatalog) -> tuple:
    return tuple((int(t), catalog.index(target.labels[t])) for t in target.labeled_indices)


def run_ati(source: Dataset, target: Dataset, cfg: AtiConfig = AtiConfig(),
            catalog: ClassCatalog | None = None, truth: list | None = None,
            initial_labels: np.ndarray | None = None) -> AtiResult:
    """Alternate assignment and mapping until the stop rule fires.

    ``truth`` (catalog labels per target row) only feeds the per-iteration
    assignment accuracy.  ``initial_labels`` (class index per target, -1 for
    rejected) replaces the first assignment, as in the seeded-assignment
    experiment.
    """
    if catalog is None:
        catalog = ClassCatalog.from_labels(source.labels)
    source.validate(catalog)
    target.validate(catalog)
    if source.dim != target.dim:
        raise ConfigError(f"source D={source.dim} but target D={target.dim}")
    C = len(catalog)
    truth_idx = None
    if truth is not None:
        truth_idx = np.array([catalog.index(t) if t in catalog else -2 for t in truth])

    skip = ()
    if catalog.open_set and not cfg.coverage_unknown:
        skip = (catalog.unknown_index,)
    fixed = _fixed_labels(target, catalog) if cfg.semi_supervised else ()
    base_solve = SolveConfig(coverage=cfg.coverage, coverage_skip=skip, fixed_labels=fixed,
                             neighbor_k=cfg.neighbor_k, backend=cfg.backend, rho=cfg.rho,
                             seed=cfg.seed)
    nbrs = build_neighbors(target, cfg.neighbor_k) if cfg.variant == "ATI_LAMBDA_NK" else None

    current = source
    total = Transform.identity(source.dim)
    W_prev = np.eye(source.dim)
    history: list[IterationRecord] = []
    prev_labels = None
    reason = "max-iterations"
    assignment = None
    for k in range(1, cfg.max_iterations + 1):
        try:
            means = class_means(current, catalog)
            d = compute_costs(means, target)
            lam = math.inf if cfg.variant == "ATI" else lambda_from_costs(d, cfg.rho)
            solve_cfg = replace(base_solve, lam=lam)
            if k == 1 and initial_labels is not None:
                labels0 = np.asarray(initial_labels, dtype=int)
                assignment = Assignment.from_labels(labels0, C, linear_objective(d, labels0, lam), lam)
            elif cfg.variant == "ATI_LAMBDA_NK":
                assignment = solve_locality(d, class_distances(means), nbrs, solve_cfg)
            elif fixed:
                assignment = solve_semi_supervised(d, solve_cfg)
            else:
                assignment = solve_unsupervised(d, solve_cfg)
            pairs = build_pairs(assignment, means, target)
            step = estimate_transform(pairs, W_prev)
        except OpenSetDAError as exc:
            exc.args = (f"iteration {k}: {exc.args[0] if exc.args else exc}",)
            raise
        metric = stop_metric(step.W, means.means, target.X, assignment)
        current = apply_transform(step, current)
        total = step.compose(total)
        W_prev = step.W
        labels = assignment.labels
        history.append(IterationRecord(
            k, lam, assignment.n_assigned, assignment.n_outliers, assignment.objective,
            metric, assignment_accuracy(labels, truth_idx), labels))
        if metric < cfg.epsilon:
            reason = "epsilon"
            break
        if cfg.stop_on_fixed_point and prev_labels is not None and np.array_equal(labels, prev_labels):
            reason = "fixed-point"
            break
        prev_labels = labels
    return AtiResult(current, total, history, assignment, reason)


def seed_assignments(target: Dataset, truth: list, fraction_correct: float, seed: int,
                     catalog: ClassCatalog) -> np.ndarray:
    """Class index per target: a ``fraction_correct`` share set to the truth,
    the rest drawn uniformly over all classes."""
    if not 0.0 <= fraction_correct <= 1.0:
        raise ConfigError("fraction_correct must lie in [0, 1]")
    rng = stream(seed, "seeded-assignment")
    T = len(target)
    truth_idx = np.array([catalog.index(catalog.to_catalog_label(t)) if t not in catalog
                          else catalog.index(t) for t in truth])
    n_correct = int(round(fraction_correct * T))
    chosen = np.zeros(T, dtype=bool)
    chosen[rng.choice(T, size=n_correct, replace=False)] = True
    labels = rng.integers(0, len(catalog), size=T)
    labels[chosen] = truth_idx[chosen]
    return labels


def history_to_csv(history, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "lambda", "n_assigned", "n_outliers", "objective",
                    "stop_metric", "assign_acc"])
        for r in history:
            w.writerow([r.iteration, repr(r.lam), r.n_assigned, r.n_outliers, repr(r.objective),
                        repr(r.stop_metric),
                        "" if r.assignment_accuracy is None else repr(r.assignment_accuracy)])
