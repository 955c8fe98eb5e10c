"""One-vs-one soft-margin linear SVMs trained by dual coordinate descent.

Each pairwise problem is the standard hinge-loss C-SVM

    min_w 0.5 ||w||^2 + C sum_i max(0, 1 - y_i w.x_i)

with the bias folded into ``w`` through a constant feature (so it is
regularised too).  The dual ``max sum(a) - 0.5 a'Qa, 0 <= a <= C`` is
solved one coordinate at a time in a seeded per-pass order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .dataset import ClassCatalog, Dataset
from .errors import ConfigError, CoverageError, DimensionError
from .seeding import stream


@dataclass(frozen=True)
class SvmConfig:
    c_param: float = 0.001
    max_passes: int = 10_000
    tolerance: float = 1e-6
    include_bias: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.c_param > 0:
            raise ConfigError("SVM C must be positive")
        if self.max_passes < 1 or not self.tolerance > 0:
            raise ConfigError("max_passes >= 1 and tolerance > 0 required")


@dataclass(frozen=True)
class PairFit:
    w: np.ndarray
    alpha: np.ndarray
    passes: int
    primal: float
    dual: float
    kkt_violation: float


@dataclass(frozen=True)
class OvoModel:
    catalog: ClassCatalog
    pairs: tuple  # ((i, j), ...) catalog indices, i < j
    weights: np.ndarray  # (n_pairs, D [+1]); positive score votes for i
    include_bias: bool = True
    fits: tuple = field(default=(), compare=False, repr=False)

    def decision(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        D = self.weights.shape[1] - (1 if self.include_bias else 0)
        if X.shape[1] != D:
            raise DimensionError(f"model expects D={D}, got {X.shape[1]}")
        return _augment(X, self.include_bias) @ self.weights.T

    def to_json(self, path) -> None:
        doc = {
            "classes": list(self.catalog.shared_classes),
            "unknown_id": self.catalog.unknown_id,
            "open_set": self.catalog.open_set,
            "include_bias": self.include_bias,
            "pairs": [list(p) for p in self.pairs],
            "weights": self.weights.tolist(),
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def from_json(cls, path) -> "OvoModel":
        doc = json.loads(Path(path).read_text())
        cat = ClassCatalog(tuple(doc["classes"]), doc["unknown_id"], doc["open_set"])
        return cls(cat, tuple(tuple(p) for p in doc["pairs"]),
                   np.array(doc["weights"], dtype=float), doc["include_bias"])


def _augment(X, bias: bool) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))]) if bias else X


@numba.njit(cache=True)
def _cd_pass(X, y, qd, alpha, w, C, order):
    for i in order:
        g = y[i] * np.dot(w, X[i]) - 1.0
        a = alpha[i]
        if a == 0.0:
            pg = min(g, 0.0)
        elif a == C:
            pg = max(g, 0.0)
        else:
            pg = g
        if pg != 0.0 and qd[i] > 0.0:
            new = min(max(a - g / qd[i], 0.0), C)
            delta = (new - a) * y[i]
            if delta != 0.0:
                w += delta * X[i]
            alpha[i] = new


def dual_objective(alpha, X, y) -> float:
    w = (alpha * y) @ X
    return float(alpha.sum() - 0.5 * w @ w)


def _diagnostics(X, y, alpha, w, C):
    margin = y * (X @ w)
    primal = 0.5 * float(w @ w) + C * float(np.maximum(0.0, 1.0 - margin).sum())
    dual = float(alpha.sum()) - 0.5 * float(w @ w)
    g = margin - 1.0
    pg = np.where(alpha <= 0.0, np.minimum(g, 0.0), np.where(alpha >= C, np.maximum(g, 0.0), g))
    return primal, dual, float(np.abs(pg).max()) if len(pg) else 0.0


def fit_binary(X: np.ndarray, y: np.ndarray, cfg: SvmConfig, rng=None) -> PairFit:
    """Binary hinge-loss SVM on already-augmented features, labels in {-1, +1}."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = X.shape[0]
    C = float(cfg.c_param)
    qd = np.einsum("ij,ij->i", X, X)
    alpha = np.zeros(n)
    w = np.zeros(X.shape[1])
    rng = rng if rng is not None else stream(cfg.seed, "svm-order")
    passes = 0
    primal, dual, kkt = _diagnostics(X, y, alpha, w, C)
    while passes < cfg.max_passes:
        _cd_pass(X, y, qd, alpha, w, C, rng.permutation(n))
        passes += 1
        # w is accumulated incrementally; rebuild it now and then
        if passes % 20 == 0:
            w = (alpha * y) @ X
        primal, dual, kkt = _diagnostics(X, y, alpha, w, C)
        if primal - dual <= cfg.tolerance * (1.0 + abs(primal)) and kkt <= cfg.tolerance:
            break
    return PairFit(w.copy(), alpha, passes, primal, dual, kkt)


def train_ovo(data: Dataset, cfg: SvmConfig = SvmConfig(),
              catalog: ClassCatalog | None = None) -> OvoModel:
    """Train one binary SVM per unordered class pair of ``catalog``."""
    if catalog is None:
        catalog = ClassCatalog.from_labels(data.labels)
    idx = data.label_indices(catalog)
    if np.any(idx < 0):
        raise ConfigError("SVM training data must be fully labeled")
    C = len(catalog)
    if C < 2:
        raise ConfigError("need at least two classes")
    counts = np.bincount(idx, minlength=C)
    empty = [catalog.classes[c] for c in range(C) if counts[c] == 0]
    if empty:
        raise CoverageError(f"classes without training samples: {empty}")
    Xa = _augment(data.X, cfg.include_bias)
    pairs, weights, fits = [], [], []
    for i in range(C):
        for j in range(i + 1, C):
            rows = np.nonzero((idx == i) | (idx == j))[0]
            y = np.where(idx[rows] == i, 1.0, -1.0)
            fit = fit_binary(Xa[rows], y, cfg, stream(cfg.seed, "svm-order", i, j))
            pairs.append((i, j))
            weights.append(fit.w)
            fits.append(fit)
    return OvoModel(catalog, tuple(pairs), np.array(weights), cfg.include_bias, tuple(fits))


def vote_counts(model: OvoModel, X: np.ndarray) -> np.ndarray:
    scores = model.decision(X)
    votes = np.zeros((scores.shape[0], len(model.catalog)), dtype=int)
    for k, (i, j) in enumerate(model.pairs):
        win_i = scores[:, k] >= 0
        votes[win_i, i] += 1
        votes[~win_i, j] += 1
    return votes


def predict(model: OvoModel, samples: Dataset | np.ndarray) -> list[str]:
    """Majority vote; ties go to the lowest catalog index."""
    X = samples.X if isinstance(samples, Dataset) else samples
    winners = np.argmax(vote_counts(model, X), axis=1)
    return [model.catalog.classes[k] for k in winners]
