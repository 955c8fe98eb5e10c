"""Linear source-to-target map fitted on assigned (class mean, target) pairs.

The loss is ``f(W) = 0.5 * ||W P_S - P_T||_F^2`` with gradient
``W (P_S P_S^T) - P_T P_S^T``.  When ``P_S P_S^T`` is well conditioned the
normal equations are solved directly.  Otherwise (typically fewer distinct
assigned means than feature dimensions) conjugate gradient runs on the
normal equations from the initial map restricted to the span of ``P_S``;
iterates never leave that span, so the limit is the minimum-norm minimiser.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assign import Assignment
from .dataset import Dataset, MeanTable
from .errors import DimensionError, NumericalError

COND_LIMIT = 1e8
NORMAL_TOL = 1e-8
GRADIENT_TOL = 1e-6
MAX_ITER = 10_000


@dataclass(frozen=True)
class AssignmentMatrices:
    P_S: np.ndarray  # (D, L) class mean per assigned target
    P_T: np.ndarray  # (D, L) the assigned targets
    classes: np.ndarray  # (L,) class index of each column
    targets: np.ndarray  # (L,) target index of each column

    @property
    def n_pairs(self) -> int:
        return self.P_S.shape[1]


@dataclass(frozen=True)
class Transform:
    W: np.ndarray
    residual: float
    iterations: int = 0
    converged: bool = True
    method: str = "identity"

    @classmethod
    def identity(cls, dim: int) -> "Transform":
        return cls(np.eye(dim), 0.0)

    def compose(self, earlier: "Transform") -> "Transform":
        """The map ``self after earlier``; diagnostics are those of ``self``."""
        return Transform(self.W @ earlier.W, self.residual, self.iterations,
                         self.converged, self.method)

    def to_json(self, path) -> None:
        doc = {"W": self.W.tolist(), "residual": self.residual, "iterations": self.iterations,
               "converged": self.converged, "method": self.method}
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def from_json(cls, path) -> "Transform":
        doc = json.loads(Path(path).read_text())
        return cls(np.array(doc["W"], dtype=float), float(doc["residual"]),
                   int(doc["iterations"]), bool(doc["converged"]), doc.get("method", "loaded"))


def build_pairs(assignment: Assignment, means: MeanTable | np.ndarray,
                targets: Dataset | np.ndarray) -> AssignmentMatrices:
    S = means.means if isinstance(means, MeanTable) else np.asarray(means, dtype=float)
    X = targets.X if isinstance(targets, Dataset) else np.asarray(targets, dtype=float)
    t_idx, c_idx = np.nonzero(assignment.x.T)  # row-major over targets: ascending t
    return AssignmentMatrices(S[c_idx].T.copy(), X[t_idx].T.copy(), c_idx, t_idx)


def loss(W, P_S, P_T) -> float:
    R = W @ P_S - P_T
    return 0.5 * float(np.einsum("ij,ij->", R, R))


def gradient(W, P_S, P_T) -> np.ndarray:
    return W @ (P_S @ P_S.T) - P_T @ P_S.T


def estimate_transform(pairs: AssignmentMatrices, W_init: np.ndarray | None = None,
                       cond_limit: float = COND_LIMIT, max_iter: int = MAX_ITER) -> Transform:
    P_S, P_T = pairs.P_S, pairs.P_T
    D, L = P_S.shape
    if L < 1:
        raise DimensionError("no assigned pairs to fit a transform on")
    if P_T.shape != (D, L):
        raise DimensionError("P_S and P_T must have the same shape")
    W0 = np.eye(D) if W_init is None else np.array(W_init, dtype=float)
    if W0.shape != (D, D):
        raise DimensionError(f"initial map must be {D}x{D}")
    A = P_S @ P_S.T
    B = P_T @ P_S.T
    scale = 1.0 + np.linalg.norm(B)
    evals, evecs = np.linalg.eigh(A)
    top = max(float(evals[-1]), 0.0)
    low = float(evals[0])
    well = top > 0 and low > 0 and top / low < cond_limit

    if well:
        W = np.linalg.solve(A, B.T).T
        it = 0
        # iterative refinement towards the gradient bound
        while np.linalg.norm(W @ A - B) > NORMAL_TOL * scale and it < 5:
            W = W - np.linalg.solve(A, (W @ A - B).T).T
            it += 1
        _check_finite(W)
        ok = np.linalg.norm(W @ A - B) <= NORMAL_TOL * scale
        return Transform(W, loss(W, P_S, P_T), it, bool(ok), "normal")

    # projector onto the span of the assigned means
    keep = evals > max(top, 1e-300) * D * np.finfo(float).eps
    U = evecs[:, keep]
    W = (W0 @ U) @ U.T
    W, it, ok = _conjugate_gradient(W, A, B, GRADIENT_TOL * scale, max_iter)
    # drop round-off drift outside the span
    W = (W @ U) @ U.T
    _check_finite(W)
    return Transform(W, loss(W, P_S, P_T), it, ok, "gradient")


def _conjugate_gradient(W, A, B, tol, max_iter):
    G = W @ A - B
    P = -G
    gg = float(np.einsum("ij,ij->", G, G))
    it = 0
    while np.sqrt(gg) > tol and it < max_iter:
        AP = P @ A
        curv = float(np.einsum("ij,ij->", P, AP))
        if not curv > 0:
            break
        step = gg / curv
        W = W + step * P
        it += 1
        if it % 50 == 0:
            G = W @ A - B  # recompute to stop residual drift
        else:
            G = G + step * AP
        gg_new = float(np.einsum("ij,ij->", G, G))
        P = -G + (gg_new / gg) * P
        gg = gg_new
        if not np.isfinite(gg):
            raise NumericalError("non-finite gradient during transform fit")
    G = W @ A - B
    return W, it, bool(np.linalg.norm(G) <= tol)


def _check_finite(W):
    if not np.all(np.isfinite(W)):
        raise NumericalError("non-finite entries in estimated transform")


def apply_transform(transform: Transform | np.ndarray, source: Dataset) -> Dataset:
    W = transform.W if isinstance(transform, Transform) else np.asarray(transform, dtype=float)
    if W.shape != (source.dim, source.dim):
        raise DimensionError(f"transform is {W.shape}, data has D={source.dim}")
    return source.with_features(source.X @ W.T)
