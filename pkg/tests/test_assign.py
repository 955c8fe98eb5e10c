import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from openset_da.assign import (
    Assignment,
    SolveConfig,
    big_m,
    build_neighbors,
    compute_costs,
    dump_instance,
    lambda_from_costs,
    linearized_objective,
    load_instance,
    locality_objective,
    solve_locality,
    solve_semi_supervised,
    solve_unsupervised,
)
from openset_da.errors import ConfigError, DimensionError, InfeasibleError
from openset_da.oracle import InstanceTooLarge, brute_force_assignment

from _fixtures import fixed_pairs, linear_instance, locality_instance


def assert_feasible(a: Assignment, coverage=True, skip=()):
    assert np.all(a.x.sum(axis=0) + a.o == 1)
    if coverage:
        for c in range(a.x.shape[0]):
            if c not in skip:
                assert a.x[c].sum() >= 1


# --- costs -----------------------------------------------------------------------

def test_costs_small_examples():
    assert compute_costs(np.array([[1.0, 2.0]]), np.array([[1.0, 2.0]]))[0, 0] == 0.0
    assert compute_costs(np.array([[1.0, 2.0]]), np.array([[4.0, 6.0]]))[0, 0] == 25.0


def test_costs_match_double_loop(rng):
    S, T = rng.normal(size=(4, 5)), rng.normal(size=(6, 5))
    d = compute_costs(S, T)
    for c in range(4):
        for t in range(6):
            ref = sum((S[c, k] - T[t, k]) ** 2 for k in range(5))
            assert d[c, t] == pytest.approx(ref, rel=1e-10)


def test_costs_dimension_mismatch():
    with pytest.raises(DimensionError):
        compute_costs(np.zeros((2, 3)), np.zeros((2, 4)))


def test_lambda_examples():
    d = np.array([[2.0, 10.0], [5.0, 7.0]])
    assert lambda_from_costs(d, 0.5) == 6.0
    assert lambda_from_costs(d, 0.0) == 0.0
    assert lambda_from_costs(d, 1.0) == 12.0 > d.max()


# --- linear solver ---------------------------------------------------------------

def test_zero_cost_matching():
    a = solve_unsupervised(np.array([[0.0, 9.0], [9.0, 0.0]]), SolveConfig(lam=100.0))
    assert a.x.tolist() == [[1, 0], [0, 1]]
    assert a.o.tolist() == [0, 0]
    assert a.objective == 0.0


def test_one_rejected_target():
    d = np.array([[1.0, 8.0, 8.0], [8.0, 1.0, 8.0]])
    a = solve_unsupervised(d, SolveConfig(lam=2.0))
    assert a.labels.tolist() == [0, 1, -1]
    assert a.objective == 4.0


def test_fixed_label_dominates_cost():
    cfg = SolveConfig(lam=100.0, fixed_labels=((0, 1),))
    a = solve_semi_supervised(np.array([[0.0, 9.0], [9.0, 0.0]]), cfg)
    assert a.x[1, 0] == 1
    assert_feasible(a)


def test_no_fixings_reduces_to_unsupervised(rng):
    for _ in range(20):
        d, lam = linear_instance(rng)
        a = solve_semi_supervised(d, SolveConfig(lam=lam))
        b = solve_unsupervised(d, SolveConfig(lam=lam))
        assert np.array_equal(a.labels, b.labels) and a.objective == b.objective


def test_singleton_coverage_forces_assignment():
    a = solve_unsupervised(np.array([[5.0]]), SolveConfig(lam=1.0))
    assert a.labels.tolist() == [0]
    labels, obj = brute_force_assignment(np.array([[5.0]]), 1.0)
    assert labels.tolist() == [0] and obj == 5.0


def test_matches_brute_force(rng):
    for _ in range(60):
        d, lam = linear_instance(rng)
        a = solve_unsupervised(d, SolveConfig(lam=lam))
        _, ref = brute_force_assignment(d, lam)
        assert abs(a.objective - ref) <= 1e-9 * max(1.0, ref)
        assert_feasible(a)


def test_semi_supervised_matches_restricted_brute_force(rng):
    for _ in range(60):
        d, lam = linear_instance(rng)
        C, T = d.shape
        fixed = fixed_pairs(rng, C, T, int(rng.integers(1, 3)))
        try:
            a = solve_semi_supervised(d, SolveConfig(lam=lam, fixed_labels=fixed))
        except InfeasibleError:
            with pytest.raises(ValueError):
                brute_force_assignment(d, lam, fixed=fixed)
            continue
        _, ref = brute_force_assignment(d, lam, fixed=fixed)
        assert abs(a.objective - ref) <= 1e-9 * max(1.0, ref)
        for t, c in fixed:
            assert a.x[c, t] == 1


def test_infinite_lambda_never_rejects(rng):
    for _ in range(20):
        d, _ = linear_instance(rng)
        assert solve_unsupervised(d, SolveConfig()).n_outliers == 0


def test_outliers_monotone_in_lambda(rng):
    for _ in range(20):
        d, _ = linear_instance(rng)
        counts = [solve_unsupervised(d, SolveConfig(lam=lam)).n_outliers
                  for lam in np.linspace(0.0, 20.0, 21)]
        assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_rho_extremes(rng):
    for _ in range(20):
        d, _ = linear_instance(rng)
        C, T = d.shape
        assert solve_unsupervised(d, SolveConfig(lam=lambda_from_costs(d, 1.0))).n_outliers == 0
        assert solve_unsupervised(d, SolveConfig(lam=0.0)).n_outliers == T - C


def test_coverage_skip_and_off():
    d = np.array([[1.0, 1.0, 1.0], [9.0, 9.0, 9.0]])
    assert solve_unsupervised(d, SolveConfig(coverage=False)).labels.tolist() == [0, 0, 0]
    a = solve_unsupervised(d, SolveConfig(coverage_skip=(1,)))
    assert a.labels.tolist() == [0, 0, 0]
    # which equal-cost target covers class 1 is not pinned down
    assert sorted(solve_unsupervised(d, SolveConfig()).labels.tolist()) == [0, 0, 1]


def test_infeasible_coverage():
    with pytest.raises(InfeasibleError):
        solve_unsupervised(np.zeros((3, 2)), SolveConfig())
    with pytest.raises(InfeasibleError):
        solve_semi_supervised(np.zeros((2, 2)), SolveConfig(fixed_labels=((0, 0), (1, 0))))


def test_bad_config():
    with pytest.raises(ConfigError):
        SolveConfig(lam=-1.0)
    with pytest.raises(ConfigError):
        SolveConfig(backend="simplex")
    with pytest.raises(ConfigError):
        solve_semi_supervised(np.zeros((2, 2)), SolveConfig(fixed_labels=((0, 0), (0, 1))))


def test_deterministic(rng):
    d, lam = linear_instance(rng)
    runs = [solve_unsupervised(d, SolveConfig(lam=lam)) for _ in range(3)]
    assert all(np.array_equal(r.x, runs[0].x) for r in runs)


def test_ties_prefer_lower_class_and_assignment():
    d = np.array([[1.0, 1.0], [1.0, 1.0]])
    a = solve_unsupervised(d, SolveConfig(lam=1.0, coverage=False))
    assert a.labels.tolist() == [0, 0]


# --- neighbours ------------------------------------------------------------------

def test_neighbors_collinear():
    X = np.array([[0.0], [1.0], [3.0]])
    assert build_neighbors(X, 1)[:, 0].tolist() == [1, 0, 1]
    assert sorted(map(sorted, build_neighbors(X, 2).tolist())) == [[0, 1], [0, 2], [1, 2]]


def test_neighbors_match_all_pairs(rng):
    X = rng.normal(size=(50, 4))
    nb = build_neighbors(X, 2)
    for i in range(50):
        dist = [(float(np.sum((X[j] - X[i]) ** 2)), j) for j in range(50) if j != i]
        assert nb[i].tolist() == [j for _, j in sorted(dist)[:2]]


def test_neighbors_bad_k():
    with pytest.raises(ConfigError):
        build_neighbors(np.zeros((3, 2)), 3)


# --- locality --------------------------------------------------------------------

def test_zero_class_distance_reduces_to_linear(rng):
    for _ in range(10):
        d, dcc, nbrs, lam = locality_instance(rng)
        a = solve_locality(d, np.zeros_like(dcc), nbrs, SolveConfig(lam=lam))
        b = solve_unsupervised(d, SolveConfig(lam=lam))
        assert a.objective == pytest.approx(b.objective, abs=1e-12)


def test_locality_pulls_neighbours_together():
    # targets 0,1 and 2,3 are tight pairs; target 1 is slightly nearer class 1
    d = np.array([[0.0, 1.0, 10.0, 10.0], [10.0, 0.9, 0.0, 0.5]])
    dcc = np.array([[0.0, 4.0], [4.0, 0.0]])
    nbrs = np.array([[1], [0], [3], [2]])
    a = solve_locality(d, dcc, nbrs, SolveConfig(lam=math.inf))
    labels, ref = brute_force_assignment(d, math.inf, dcc=dcc, nbrs=nbrs)
    assert a.labels.tolist() == labels.tolist() == [0, 0, 1, 1]
    assert a.objective == ref == 1.5
    assert solve_unsupervised(d, SolveConfig()).labels.tolist() == [0, 1, 1, 1]


def test_linearized_matches_quadratic(rng):
    for _ in range(50):
        d, dcc, nbrs, lam = locality_instance(rng, k=int(rng.integers(1, 3)))
        C, T = d.shape
        labels = rng.integers(-1, C, size=T)
        a = Assignment.from_labels(labels, C, 0.0, lam)
        lin, w = linearized_objective(d, dcc, nbrs, a.x, a.o, lam)
        assert lin == pytest.approx(locality_objective(d, dcc, nbrs, labels, lam), rel=1e-12)
        assert np.all(w >= 0)
        assert np.all(big_m(dcc, nbrs) >= 0)


def test_exact_backend_matches_brute_force(rng):
    for _ in range(30):
        d, dcc, nbrs, lam = locality_instance(rng)
        a = solve_locality(d, dcc, nbrs, SolveConfig(lam=lam, backend="exact"))
        _, ref = brute_force_assignment(d, lam, dcc=dcc, nbrs=nbrs)
        assert abs(a.objective - ref) <= 1e-9 * max(1.0, ref)
        assert_feasible(a)


def test_locality_respects_fixings(rng):
    for _ in range(20):
        d, dcc, nbrs, lam = locality_instance(rng)
        C, T = d.shape
        fixed = fixed_pairs(rng, C, T, 1)
        for backend in ("exact", "heuristic"):
            a = solve_locality(d, dcc, nbrs, SolveConfig(lam=lam, fixed_labels=fixed,
                                                         backend=backend))
            t, c = fixed[0]
            assert a.x[c, t] == 1
            assert_feasible(a)


def test_heuristic_deterministic(rng):
    d, dcc, nbrs, lam = locality_instance(rng, targets=(12, 12))
    cfg = SolveConfig(lam=lam, backend="heuristic", seed=3)
    a, b = solve_locality(d, dcc, nbrs, cfg), solve_locality(d, dcc, nbrs, cfg)
    assert np.array_equal(a.labels, b.labels)


# --- oracle and dumps ----------------------------------------------------------------

def test_oracle_size_limit():
    with pytest.raises(InstanceTooLarge):
        brute_force_assignment(np.zeros((9, 9)), 1.0)


def test_dump_roundtrip(tmp_path, rng):
    d, dcc, nbrs, lam = locality_instance(rng)
    cfg = SolveConfig(lam=lam, coverage_skip=(0,))
    a = solve_locality(d, dcc, nbrs, cfg)
    dump_instance(tmp_path / "i.json", d, cfg, a, dcc, nbrs)
    inst = load_instance(tmp_path / "i.json")
    assert np.array_equal(inst["costs"], d)
    assert inst["cfg"].lam == lam and inst["cfg"].coverage_skip == (0,)
    assert np.array_equal(inst["assignment"].x, a.x)
    dump_instance(tmp_path / "j.json", d, SolveConfig())
    assert json.loads((tmp_path / "j.json").read_text())["lambda"] is None
    assert math.isinf(load_instance(tmp_path / "j.json")["cfg"].lam)


# --- properties ----------------------------------------------------------------------

costs = st.integers(2, 4).flatmap(lambda C: st.integers(C, 6).flatmap(
    lambda T: st.lists(st.floats(0, 10, allow_nan=False), min_size=C * T, max_size=C * T)
    .map(lambda v: np.array(v).reshape(C, T))))


@settings(max_examples=60, deadline=None)
@given(costs, st.sampled_from([0.0, 0.2, 0.5, 1.0]))
def test_property_feasible_and_optimal(d, rho):
    lam = lambda_from_costs(d, rho)
    a = solve_unsupervised(d, SolveConfig(lam=lam))
    assert_feasible(a)
    _, ref = brute_force_assignment(d, lam)
    assert a.objective <= ref + 1e-9 * max(1.0, ref)
