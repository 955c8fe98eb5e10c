"""Reference implementations for verification only.

Nothing here imports the production solvers: the brute force enumerates
every (class | outlier) labeling and evaluates the objectives from their
definitions, and the gradient check uses central differences of the
mapping loss.
"""
from __future__ import annotations

import math

import numpy as np

MAX_LABELINGS = 10**7
_CHUNK = 1 << 18


class InstanceTooLarge(ValueError):
    pass


def brute_force_assignment(d, lam: float = math.inf, coverage: bool = True, fixed=(),
                           dcc=None, nbrs=None, coverage_skip=()):
    """Exhaustive optimum of the assignment problem.

    Labels run over ``0..C-1`` plus ``C`` for "outlier" (skipped when
    ``lam`` is infinite).  Labelings are enumerated with target 0 as the most
    significant digit and class index as the digit value, so the first
    labeling reaching the minimum is the one preferring lower class indices
    on lower targets.

    Returns ``(labels, objective)`` with ``-1`` marking outliers.
    """
    d = np.asarray(d, dtype=float)
    C, T = d.shape
    base = C + 1 if math.isfinite(lam) else C
    total = base ** T
    if total > MAX_LABELINGS:
        raise InstanceTooLarge(f"{total} labelings exceed the enumeration limit")
    option = np.vstack([d, np.full((1, T), lam if math.isfinite(lam) else 0.0)])
    required = [c for c in range(C) if coverage and c not in set(coverage_skip)]
    fixed = list(fixed)
    powers = base ** np.arange(T - 1, -1, -1)

    if dcc is None:
        best_val, best_code = _enumerate_linear(option, base, required, fixed)
    else:
        best_val, best_code = _enumerate_chunked(option, base, powers, required, fixed,
                                                 dcc, nbrs)
    if best_code is None:
        raise ValueError("no feasible labeling")
    digits = [(best_code // int(p)) % base for p in powers]
    labels = np.array([-1 if v == C else v for v in digits], dtype=int)
    return labels, best_val


def _enumerate_linear(option, base, required, fixed):
    # cartesian sums, target 0 most significant after ravel
    C1, T = option.shape
    fixed = dict(fixed)
    bits = np.array([1 << c for c in range(C1 - 1)] + [0], dtype=np.int64)
    need = 0
    for c in required:
        need |= 1 << c
    val = np.zeros(1)
    mask = np.zeros(1, dtype=np.int64)
    for t in range(T):
        col = option[:base, t].copy()
        if t in fixed:
            keep = np.full(base, np.inf)
            keep[fixed[t]] = 0.0
            col = col + keep
        val = (val[:, None] + col[None, :]).ravel()
        mask = (mask[:, None] | bits[None, :base]).ravel()
    val[(mask & need) != need] = np.inf
    i = int(np.argmin(val))
    if not np.isfinite(val[i]):
        return math.inf, None
    return float(val[i]), i


def _enumerate_chunked(option, base, powers, required, fixed, dcc, nbrs):
    C = option.shape[0] - 1
    T = option.shape[1]
    total = base ** T
    best_val, best_code = math.inf, None
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        lab = (codes[:, None] // powers[None, :]) % base  # (n, T)
        ok = np.ones(len(codes), dtype=bool)
        for t, c in fixed:
            ok &= lab[:, t] == c
        for c in required:
            ok &= (lab == c).any(axis=1)
        if not ok.any():
            continue
        val = np.zeros(len(codes))
        for t in range(T):
            val += option[lab[:, t], t]
        for t in range(T):
            for u in nbrs[t]:
                a, b = lab[:, t], lab[:, int(u)]
                both = (a < C) & (b < C)
                val += np.where(both, dcc[np.minimum(a, C - 1), np.minimum(b, C - 1)], 0.0)
        val[~ok] = np.inf
        i = int(np.argmin(val))
        if val[i] < best_val:
            best_val, best_code = float(val[i]), int(codes[i])
    return best_val, best_code


def mapping_loss(W, P_S, P_T) -> float:
    R = W @ P_S - P_T
    return 0.5 * float(np.sum(R * R))


def finite_diff_gradient(P_S, P_T, W, h: float = 1e-5) -> np.ndarray:
    if h <= 0:
        raise ValueError("step must be positive")
    W = np.array(W, dtype=float)
    G = np.zeros_like(W)
    for i in range(W.shape[0]):
        for j in range(W.shape[1]):
            Wp = W.copy()
            Wm = W.copy()
            Wp[i, j] += h
            Wm[i, j] -= h
            G[i, j] = (mapping_loss(Wp, P_S, P_T) - mapping_loss(Wm, P_S, P_T)) / (2 * h)
    return G
