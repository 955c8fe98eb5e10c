"""Assignment of target samples to source classes with outlier rejection.

Three problems share one solution type:

* the unsupervised problem: every target is assigned to one class or
  rejected at cost ``lam``, and every class receives at least one target;
* the semi-supervised problem: the same, with some targets pinned to a class;
* the locality-constrained problem: the same constraints with an extra
  pairwise cost ``dcc[c, c']`` whenever target ``t`` takes class ``c`` and a
  neighbour ``t'`` of ``t`` takes ``c'``.

The linear problems are solved exactly by a reduction to a rectangular
assignment: each free target takes its cheapest option, then a minimum-cost
matching picks one distinct representative target per class that still
needs covering, paying only the surplus over that target's cheapest option.
The quadratic problem uses depth-first branch and bound on top of the
linear solver, or iterated conditional modes for large instances.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dataset import Dataset, MeanTable
from .errors import ConfigError, DimensionError, InfeasibleError
from .seeding import stream

BACKENDS = ("exact", "heuristic", "auto")
AUTO_EXACT_LIMIT = 10**6


@dataclass(frozen=True)
class SolveConfig:
    lam: float = math.inf
    rho: float = 0.5
    coverage: bool = True
    # class indices exempt from the coverage constraint
    coverage_skip: tuple = ()
    fixed_labels: tuple = ()  # (target index, class index) pairs
    neighbor_k: int = 0
    backend: str = "auto"
    n_starts: int = 8
    seed: int = 0

    def __post_init__(self):
        if not (self.lam >= 0):
            raise ConfigError("lambda must be >= 0 (or inf)")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError("rho must lie in [0, 1]")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        object.__setattr__(self, "fixed_labels",
                           tuple((int(t), int(c)) for t, c in self.fixed_labels))
        object.__setattr__(self, "coverage_skip", tuple(int(c) for c in self.coverage_skip))


@dataclass(frozen=True)
class Assignment:
    x: np.ndarray  # (|C|, |T|) 0/1
    o: np.ndarray  # (|T|,) 0/1
    objective: float
    lam: float = math.inf

    @property
    def labels(self) -> np.ndarray:
        """Class index per target, -1 for rejected targets."""
        lab = np.argmax(self.x, axis=0)
        lab[self.o.astype(bool)] = -1
        return lab

    @property
    def n_assigned(self) -> int:
        return int(self.x.sum())

    @property
    def n_outliers(self) -> int:
        return int(self.o.sum())

    @classmethod
    def from_labels(cls, labels, n_classes: int, objective: float, lam: float) -> "Assignment":
        labels = np.asarray(labels, dtype=int)
        T = labels.shape[0]
        x = np.zeros((n_classes, T), dtype=np.int8)
        keep = labels >= 0
        x[labels[keep], np.nonzero(keep)[0]] = 1
        o = (~keep).astype(np.int8)
        return cls(x, o, float(objective), float(lam))


# --- costs -------------------------------------------------------------------

def compute_costs(means: MeanTable | np.ndarray, targets: Dataset | np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from every class mean to every target, shape (|C|, |T|)."""
    S = means.means if isinstance(means, MeanTable) else np.asarray(means, dtype=float)
    T = targets.X if isinstance(targets, Dataset) else np.asarray(targets, dtype=float)
    if S.shape[1] != T.shape[1]:
        raise DimensionError(f"means have D={S.shape[1]}, targets D={T.shape[1]}")
    d = np.empty((S.shape[0], T.shape[0]))
    for c in range(S.shape[0]):
        diff = T - S[c]
        d[c] = np.einsum("ij,ij->i", diff, diff)
    return d


def class_distances(means: MeanTable | np.ndarray) -> np.ndarray:
    S = means.means if isinstance(means, MeanTable) else np.asarray(means, dtype=float)
    return compute_costs(S, S)


def lambda_from_costs(d: np.ndarray, rho: float) -> float:
    d = np.asarray(d)
    if d.size == 0:
        raise ValueError("empty cost matrix")
    return float(rho * (d.max() + d.min()))


def build_neighbors(targets: Dataset | np.ndarray, k: int, chunk: int = 512) -> np.ndarray:
    """k nearest targets of every target (itself excluded), shape (|T|, k).

    Candidates come from the Gram expansion; the final ranking uses exact
    differences with ties resolved towards the lower index.
    """
    X = targets.X if isinstance(targets, Dataset) else np.asarray(targets, dtype=float)
    n = X.shape[0]
    if k < 0 or k >= n:
        raise ConfigError(f"need 0 <= k < |T| (k={k}, |T|={n})")
    out = np.empty((n, k), dtype=int)
    if k == 0:
        return out
    sq = np.einsum("ij,ij->i", X, X)
    n_cand = min(n - 1, k + 8)
    for start in range(0, n, chunk):
        rows = np.arange(start, min(n, start + chunk))
        g = sq[rows, None] + sq[None, :] - 2.0 * X[rows] @ X.T
        g[np.arange(len(rows)), rows] = np.inf
        cand = np.argpartition(g, n_cand - 1, axis=1)[:, :n_cand]
        for r, i in enumerate(rows):
            c = cand[r]
            # widen the candidate set to everything tied with the boundary value
            edge = g[r, c].max()
            c = np.nonzero(g[r] <= edge * (1 + 1e-9) + 1e-12)[0]
            c = c[c != i]
            diff = X[c] - X[i]
            exact = np.einsum("ij,ij->i", diff, diff)
            order = np.lexsort((c, exact))
            out[i] = c[order[:k]]
    return out


# --- objectives --------------------------------------------------------------

def linear_objective(d: np.ndarray, labels, lam: float) -> float:
    labels = np.asarray(labels)
    keep = labels >= 0
    total = float(d[labels[keep], np.nonzero(keep)[0]].sum())
    n_out = int((~keep).sum())
    if n_out:
        total += lam * n_out
    return total


def locality_objective(d, dcc, nbrs, labels, lam: float) -> float:
    """Linear cost plus sum over t, t' in N_t of dcc[l_t, l_t'] (both assigned)."""
    labels = np.asarray(labels)
    total = linear_objective(d, labels, lam)
    if nbrs is None or np.size(nbrs) == 0:
        return total
    src = np.repeat(np.arange(len(labels)), nbrs.shape[1])
    dst = nbrs.ravel()
    ls, lt = labels[src], labels[dst]
    both = (ls >= 0) & (lt >= 0)
    return total + float(dcc[ls[both], lt[both]].sum())


def big_m(dcc: np.ndarray, nbrs: np.ndarray) -> np.ndarray:
    """a[c, t] = sum over t' in N_t and all c' of dcc[c, c']."""
    row = dcc.sum(axis=1)
    return np.outer(row, np.full(nbrs.shape[0], nbrs.shape[1], dtype=float))


def linearized_objective(d, dcc, nbrs, x, o, lam: float) -> tuple[float, np.ndarray]:
    """Objective of the mixed 0-1 linear program for a fixed binary (x, o).

    The auxiliary ``w`` only appears in ``a x + s - w <= a`` and ``w >= 0``
    with positive objective weight, so its optimum is
    ``max(0, s - a (1 - x))`` where ``s[c, t]`` is the neighbourhood cost.
    Returns the objective and the minimising ``w``.
    """
    x = np.asarray(x, dtype=float)
    o = np.asarray(o, dtype=float)
    a = big_m(dcc, nbrs)
    # s[c, t] = sum_{t' in N_t} sum_c' dcc[c, c'] x[c', t']
    s = (dcc @ x)[:, nbrs].sum(axis=2)
    w = np.maximum(0.0, a * x + s - a)
    obj = float((d * x).sum() + w.sum())
    if o.any():
        obj += lam * float(o.sum())
    return obj, w


# --- linear solver -----------------------------------------------------------

def _validate_fixed(fixed, n_classes: int, n_targets: int) -> dict[int, int]:
    out: dict[int, int] = {}
    for t, c in fixed:
        if not (0 <= t < n_targets) or not (-1 <= c < n_classes):
            raise ConfigError(f"fixed label ({t}, {c}) out of range")
        if out.get(t, c) != c:
            raise ConfigError(f"target {t} fixed to both {out[t]} and {c}")
        out[t] = c
    return out


def _solve_linear(d: np.ndarray, lam: float, required, fixed: dict[int, int]) -> np.ndarray:
    """Optimal labels (-1 = outlier) for the linear problem.

    ``required`` lists classes that need at least one target; ``fixed`` maps
    target -> class (or -1 for a forced outlier).
    """
    C, T = d.shape
    free = np.array([t for t in range(T) if t not in fixed], dtype=int)
    labels = np.full(T, -1, dtype=int)
    for t, c in fixed.items():
        labels[t] = c
    covered = {c for c in fixed.values() if c >= 0}
    need = [c for c in required if c not in covered]
    if len(need) > len(free):
        raise InfeasibleError(
            f"{len(need)} classes still need a target but only {len(free)} targets are free")
    if len(free) == 0:
        return labels
    df = d[:, free]
    best_c = np.argmin(df, axis=0)  # lowest class index on ties
    best = df[best_c, np.arange(len(free))]
    reject = lam < best
    labels[free] = np.where(reject, -1, best_c)
    if not need:
        return labels
    base = np.where(reject, lam, best)
    surplus = df[need] - base[None, :]
    rows, cols = linear_sum_assignment(surplus)
    for r, col in zip(rows, cols):
        labels[free[col]] = need[r]
    return labels


def _required(cfg: SolveConfig, n_classes: int) -> list[int]:
    if not cfg.coverage:
        return []
    skip = set(cfg.coverage_skip)
    return [c for c in range(n_classes) if c not in skip]


def solve_unsupervised(d: np.ndarray, cfg: SolveConfig) -> Assignment:
    d = np.asarray(d, dtype=float)
    C, T = d.shape
    labels = _solve_linear(d, cfg.lam, _required(cfg, C), {})
    return Assignment.from_labels(labels, C, linear_objective(d, labels, cfg.lam), cfg.lam)


def solve_semi_supervised(d: np.ndarray, cfg: SolveConfig) -> Assignment:
    d = np.asarray(d, dtype=float)
    C, T = d.shape
    fixed = _validate_fixed(cfg.fixed_labels, C, T)
    if any(c < 0 for c in fixed.values()):
        raise ConfigError("labeled targets must carry a class, not the outlier label")
    labels = _solve_linear(d, cfg.lam, _required(cfg, C), fixed)
    return Assignment.from_labels(labels, C, linear_objective(d, labels, cfg.lam), cfg.lam)


# --- locality-constrained solver -----------------------------------------------

def solve_locality(d: np.ndarray, dcc: np.ndarray, nbrs: np.ndarray, cfg: SolveConfig) -> Assignment:
    d = np.asarray(d, dtype=float)
    dcc = np.asarray(dcc, dtype=float)
    nbrs = np.asarray(nbrs, dtype=int)
    C, T = d.shape
    if nbrs.shape[0] != T:
        raise DimensionError("neighbour graph and cost matrix disagree on |T|")
    fixed = _validate_fixed(cfg.fixed_labels, C, T)
    required = _required(cfg, C)
    backend = cfg.backend
    if backend == "auto":
        backend = "exact" if C ** T <= AUTO_EXACT_LIMIT else "heuristic"
    if backend == "exact":
        labels = _branch_and_bound(d, dcc, nbrs, cfg.lam, required, fixed)
    else:
        labels = _icm_multistart(d, dcc, nbrs, cfg.lam, required, fixed, cfg.n_starts, cfg.seed)
    obj = locality_objective(d, dcc, nbrs, labels, cfg.lam)
    return Assignment.from_labels(labels, C, obj, cfg.lam)


def _branch_and_bound(d, dcc, nbrs, lam, required, fixed) -> np.ndarray:
    C, T = d.shape
    root = _solve_linear(d, lam, required, fixed)
    best_labels = root
    best_obj = locality_objective(d, dcc, nbrs, root, lam)

    free = [t for t in range(T) if t not in fixed]
    spread = d.max(axis=0) - d.min(axis=0)
    order = sorted(free, key=lambda t: (-spread[t], t))
    opt_cost = np.vstack([d, np.full((1, T), lam)])  # row C = outlier

    def pair_cost(partial: dict[int, int]) -> float:
        total = 0.0
        for t, c in partial.items():
            if c < 0:
                continue
            for u in nbrs[t]:
                cu = partial.get(int(u), -2)
                if cu >= 0:
                    total += dcc[c, cu]
        return total

    def visit(depth: int, partial: dict[int, int]):
        nonlocal best_labels, best_obj
        try:
            relaxed = _solve_linear(d, lam, required, partial)
        except InfeasibleError:
            return
        bound = linear_objective(d, relaxed, lam) + pair_cost(partial)
        if bound >= best_obj:
            return
        full = locality_objective(d, dcc, nbrs, relaxed, lam)
        if full < best_obj:
            best_obj, best_labels = full, relaxed
        if full <= bound or depth == len(order):
            return
        t = order[depth]
        values = list(range(C)) + ([-1] if math.isfinite(lam) else [])
        values.sort(key=lambda v: (opt_cost[v if v >= 0 else C, t], v if v >= 0 else C))
        for v in values:
            partial[t] = v
            visit(depth + 1, partial)
            del partial[t]

    visit(0, dict(fixed))
    return best_labels


def _icm_multistart(d, dcc, nbrs, lam, required, fixed, n_starts: int, seed: int) -> np.ndarray:
    """Best of ``n_starts`` local searches.

    Start 0 is the optimum of the linear problem; the others solve the linear
    problem on randomly perturbed costs, so every start satisfies coverage.
    """
    C, T = d.shape
    rev: list[list[int]] = [[] for _ in range(T)]
    for t in range(T):
        for u in nbrs[t]:
            rev[int(u)].append(t)
    best_labels, best_obj = None, math.inf
    spread = float(d.max() - d.min()) or 1.0
    for s in range(max(1, n_starts)):
        if s == 0:
            labels = _solve_linear(d, lam, required, fixed)
        else:
            noise = stream(seed, "icm-start", s).uniform(-0.5, 0.5, size=d.shape) * spread
            labels = _solve_linear(d + noise, lam, required, fixed)
        labels = _descend(d, dcc, nbrs, rev, lam, labels, required, fixed)
        obj = locality_objective(d, dcc, nbrs, labels, lam)
        if obj < best_obj:
            best_obj, best_labels = obj, labels
    return best_labels


def _descend(d, dcc, nbrs, rev, lam, labels, required, fixed, max_rounds: int = 50):
    """Alternate global relinearised solves and sequential ICM until neither improves."""
    obj = locality_objective(d, dcc, nbrs, labels, lam)
    for _ in range(max_rounds):
        improved = False
        # pairwise cost of each class given the neighbours' current labels
        lin = d.copy()
        for t in range(d.shape[1]):
            for u in list(nbrs[t]) + rev[t]:
                if labels[u] >= 0:
                    lin[:, t] += dcc[:, labels[u]]
        cand = _solve_linear(lin, lam, required, fixed)
        cand_obj = locality_objective(d, dcc, nbrs, cand, lam)
        if cand_obj < obj - 1e-12 * max(1.0, abs(obj)):
            labels, obj, improved = cand, cand_obj, True
        cand = _icm(d, dcc, nbrs, rev, lam, labels, required, fixed)
        cand_obj = locality_objective(d, dcc, nbrs, cand, lam)
        if cand_obj < obj - 1e-12 * max(1.0, abs(obj)):
            labels, obj, improved = cand, cand_obj, True
        if not improved:
            break
    return labels


def _icm(d, dcc, nbrs, rev, lam, labels, required, fixed, max_sweeps: int = 100,
         budget: int = 4096) -> np.ndarray:
    """Block conditional modes.

    For every free target ``t`` the window ``{t} + N_t + (targets having t as
    neighbour) + (sole members of required classes)`` is relabeled jointly by
    enumeration with everything outside the window held fixed.  The window is
    truncated so that at most ``budget`` joint labelings are scored.  Moving
    sole class members together with ``t`` lets the search exchange classes
    without ever violating coverage.
    """
    C, T = d.shape
    labels = labels.copy()
    req = np.zeros(C, dtype=bool)
    req[list(required)] = True
    n_val = C + (1 if math.isfinite(lam) else 0)
    max_w = max(1, int(math.floor(math.log(budget) / math.log(max(n_val, 2)))))
    opt = np.vstack([d, np.full((1, T), lam if math.isfinite(lam) else 0.0)])
    dcc_ext = np.zeros((C + 1, C + 1))
    dcc_ext[:C, :C] = dcc
    grids: dict[int, np.ndarray] = {}

    def grid(w: int) -> np.ndarray:
        if w not in grids:
            grids[w] = np.stack(np.meshgrid(*([np.arange(n_val)] * w), indexing="ij"),
                                axis=-1).reshape(-1, w)
        return grids[w]

    def window_for(t: int) -> list[int]:
        counts = np.bincount(labels[labels >= 0], minlength=C)
        soles = [int(np.nonzero(labels == c)[0][0]) for c in range(C) if req[c] and counts[c] == 1]
        out = []
        for u in [t] + [int(v) for v in nbrs[t]] + rev[t] + soles:
            if u not in fixed and u not in out:
                out.append(u)
        return out[:max_w]

    def try_window(win: list[int]) -> bool:
        w = len(win)
        inside = set(win)
        labs = grid(w)  # value C encodes "outlier"
        cur = np.array([C if labels[u] < 0 else labels[u] for u in win])
        # unary part: own cost plus interaction with fixed outside labels
        energy = np.zeros(len(labs))
        for j, u in enumerate(win):
            un = opt[:, u].copy()
            for v in list(nbrs[u]) + rev[u]:
                if int(v) in inside:
                    continue
                lv = labels[v]
                if lv >= 0:
                    un[:C] += dcc[:, lv]
            energy += un[labs[:, j]]
        for j, u in enumerate(win):
            for v in nbrs[u]:
                if int(v) in inside:
                    energy += dcc_ext[labs[:, j], labs[:, win.index(int(v))]]
        outside = np.bincount(labels[labels >= 0], minlength=C)
        for u in win:
            if labels[u] >= 0:
                outside[labels[u]] -= 1
        ok = np.ones(len(labs), dtype=bool)
        for c in np.nonzero(req & (outside == 0))[0]:
            ok &= (labs == c).any(axis=1)
        energy[~ok] = np.inf
        cur_idx = int(np.ravel_multi_index(tuple(cur), (n_val,) * w))
        best = int(np.argmin(energy))
        if not energy[best] < energy[cur_idx] - 1e-12 * max(1.0, abs(energy[cur_idx])):
            return False
        for j, u in enumerate(win):
            labels[u] = -1 if labs[best, j] == C else labs[best, j]
        return True

    for _ in range(max_sweeps):
        changed = False
        for t in range(T):
            if t not in fixed:
                changed |= try_window(window_for(t))
        if not changed:
            break
    return labels


# --- debug dumps ---------------------------------------------------------------

def dump_instance(path, d, cfg: SolveConfig, assignment: Assignment | None = None,
                  dcc=None, nbrs=None) -> None:
    doc = {
        "costs": np.asarray(d).tolist(),
        "lambda": None if math.isinf(cfg.lam) else cfg.lam,
        "coverage": cfg.coverage,
        "coverage_skip": list(cfg.coverage_skip),
        "fixed_labels": [list(p) for p in cfg.fixed_labels],
    }
    if dcc is not None:
        doc["dcc"] = np.asarray(dcc).tolist()
        doc["neighbors"] = np.asarray(nbrs).tolist()
    if assignment is not None:
        doc["x"] = assignment.x.tolist()
        doc["o"] = assignment.o.tolist()
        doc["objective"] = assignment.objective
    Path(path).write_text(json.dumps(doc, indent=1))


def load_instance(path) -> dict:
    doc = json.loads(Path(path).read_text())
    lam = doc.get("lambda")
    out = {
        "costs": np.array(doc["costs"], dtype=float),
        "cfg": SolveConfig(lam=math.inf if lam is None else float(lam),
                           coverage=doc.get("coverage", True),
                           coverage_skip=tuple(doc.get("coverage_skip", ())),
                           fixed_labels=tuple(tuple(p) for p in doc.get("fixed_labels", ()))),
        "dcc": None, "neighbors": None, "assignment": None,
    }
    if "dcc" in doc:
        out["dcc"] = np.array(doc["dcc"], dtype=float)
        out["neighbors"] = np.array(doc["neighbors"], dtype=int)
    if "x" in doc:
        out["assignment"] = Assignment(np.array(doc["x"], dtype=np.int8),
                                       np.array(doc["o"], dtype=np.int8),
                                       float(doc["objective"]), out["cfg"].lam)
    return out
