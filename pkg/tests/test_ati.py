import hashlib
import math

import numpy as np
import pytest

from openset_da.ati import (
    AtiConfig,
    assignment_accuracy,
    history_to_csv,
    parse_variant,
    run_ati,
    seed_assignments,
)
from openset_da.dataset import AffineShift, ClassCatalog, Dataset, synth_shift, truth_labels
from openset_da.errors import ConfigError
from openset_da.pipeline import adapt_and_classify, baseline
from openset_da.svm import SvmConfig


def synthetic(seed=0, ratio=0.5, rotation=20.0, translation=5.0, **kw):
    shift = AffineShift.rotation_translation(10, rotation, translation, seed=seed)
    src, tgt, gt = synth_shift(3, 100, 10, shift, ratio, seed=seed, **kw)
    cat = ClassCatalog.from_labels(src.labels)
    return src, tgt, cat, truth_labels(tgt, gt, cat)


def digest(ds: Dataset) -> str:
    return hashlib.sha256(ds.X.tobytes() + repr(ds.labels).encode()).hexdigest()


def test_aligned_domains():
    # one sample per class: every target sits exactly on its class mean
    X = 5 * np.eye(3)
    src = Dataset(X, ("c0", "c1", "c2"), "source")
    res = run_ati(src, Dataset(X, (None,) * 3, "target"), AtiConfig(variant="ATI"))
    assert res.history[0].stop_metric < 0.01 and res.stop_reason == "epsilon"
    assert np.linalg.norm(res.transform.W - np.eye(3)) < 1e-3


def test_aligned_noisy_domains_keep_identity():
    # within-class spread keeps the residual above epsilon; the fixed point stops it
    rng = np.random.default_rng(0)
    X = np.vstack([c + 0.1 * rng.normal(size=(20, 3)) for c in 5 * np.eye(3)])
    labels = tuple(f"c{i}" for i in range(3) for _ in range(20))
    res = run_ati(Dataset(X, labels, "source"), Dataset(X, (None,) * 60, "target"),
                  AtiConfig(variant="ATI"))
    assert res.stop_reason == "fixed-point" and len(res.history) == 2
    assert np.linalg.norm(res.transform.W - np.eye(3)) < 1e-2


def test_target_never_changes():
    src, tgt, cat, truth = synthetic()
    before = digest(tgt)
    run_ati(src, tgt, AtiConfig(), cat, truth)
    assert digest(tgt) == before


def test_converges_and_records_history():
    src, tgt, cat, truth = synthetic(seed=1)
    res = run_ati(src, tgt, AtiConfig(), cat, truth)
    assert 1 <= len(res.history) <= 10
    assert [h.iteration for h in res.history] == list(range(1, len(res.history) + 1))
    for h in res.history:
        assert h.n_assigned + h.n_outliers == len(tgt)
        assert math.isfinite(h.lam)
    assert res.history[-1].assignment_accuracy > 0.9


def test_plain_variant_rejects_nothing():
    src, tgt, cat, truth = synthetic(seed=2)
    res = run_ati(src, tgt, AtiConfig(variant="ATI"), cat)
    assert all(h.n_outliers == 0 and math.isinf(h.lam) for h in res.history)


def test_rho_extremes():
    src, tgt, cat, _ = synthetic(seed=3)
    one = run_ati(src, tgt, AtiConfig(rho=1.0, max_iterations=1), cat)
    assert one.history[0].n_outliers == 0
    zero = run_ati(src, tgt, AtiConfig(rho=0.0, max_iterations=1), cat)
    assert zero.history[0].n_outliers == len(tgt) - len(cat)


def test_locality_variant_runs():
    src, tgt, cat, truth = synthetic(seed=4, ratio=0.1)
    small = tgt.take(np.arange(0, len(tgt), 6))
    res = run_ati(src, small, AtiConfig(variant="ATI_LAMBDA_NK", neighbor_k=1, max_iterations=3),
                  cat, [truth[i] for i in range(0, len(tgt), 6)])
    assert len(res.history) >= 1
    assert res.history[-1].assignment_accuracy > 0.8


def test_labeled_targets_stay_fixed():
    src, tgt, cat, truth = synthetic(seed=5)
    marks = list(tgt.labels)
    for t in (0, 150, 299):
        marks[t] = truth[t]
    labeled = tgt.with_labels(marks)
    res = run_ati(src, labeled, AtiConfig(), cat)
    for t in (0, 150, 299):
        assert res.assignment.labels[t] == cat.index(truth[t])


def test_seeded_assignment_fractions():
    src, tgt, cat, truth = synthetic(seed=6, ratio=0.0, n_source_unknown=0, n_target_unknown=0)
    full = seed_assignments(tgt, truth, 1.0, 0, cat)
    res = run_ati(src, tgt, AtiConfig(), cat, truth, initial_labels=full)
    assert res.history[0].assignment_accuracy == 1.0
    truth_idx = np.array([cat.index(t) for t in truth])
    acc = [np.mean(seed_assignments(tgt, truth, 0.0, s, cat) == truth_idx) for s in range(20)]
    assert abs(np.mean(acc) - 1 / 3) < 0.03
    with pytest.raises(ConfigError):
        seed_assignments(tgt, truth, 1.5, 0, cat)


def test_seeded_half_correct_ten_classes():
    cat = ClassCatalog(tuple(f"c{i}" for i in range(10)), open_set=False)
    truth = [f"c{i % 10}" for i in range(400)]
    tgt = Dataset(np.zeros((400, 2)), (None,) * 400, "target")
    truth_idx = np.array([i % 10 for i in range(400)])
    acc = np.mean([np.mean(seed_assignments(tgt, truth, 0.5, s, cat) == truth_idx)
                   for s in range(100)])
    assert 0.5 <= acc <= 0.56


def test_assignment_accuracy_helper():
    assert assignment_accuracy(np.array([0, 1, -1]), None) is None
    assert assignment_accuracy(np.array([0, 1, -1]), np.array([0, 0, 2])) == 0.5
    assert math.isnan(assignment_accuracy(np.array([-1]), np.array([0])))


def test_config_validation():
    assert parse_variant("ati-lambda-n2") == ("ATI_LAMBDA_NK", 2)
    with pytest.raises(ConfigError):
        parse_variant("ati-x")
    with pytest.raises(ConfigError):
        AtiConfig(variant="ATI_LAMBDA_NK")
    with pytest.raises(ConfigError):
        AtiConfig(rho=2.0)
    with pytest.raises(ConfigError):
        AtiConfig(epsilon=0.0)


def test_dimension_mismatch():
    src = Dataset(np.zeros((2, 2)), ("a", "b"))
    with pytest.raises(ConfigError):
        run_ati(src, Dataset(np.zeros((2, 3)), (None, None), "target"))


def test_history_csv(tmp_path):
    src, tgt, cat, truth = synthetic(seed=7)
    res = run_ati(src, tgt, AtiConfig(max_iterations=2), cat, truth)
    history_to_csv(res.history, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0].startswith("iteration,lambda") and len(lines) == len(res.history) + 1


def test_adaptation_beats_baseline():
    src, tgt, cat, truth = synthetic(seed=8)
    ours = adapt_and_classify(src, tgt, cat, AtiConfig(), SvmConfig(), truth)
    base = baseline(src, tgt, cat, SvmConfig(), "s", truth)
    assert ours.report.overall_accuracy > base.report.overall_accuracy + 0.1


def test_identity_shift_baseline_close():
    src, tgt, cat, truth = synthetic(seed=9, rotation=0.0, translation=0.0)
    ours = adapt_and_classify(src, tgt, cat, AtiConfig(), SvmConfig(), truth)
    base = baseline(src, tgt, cat, SvmConfig(), "s", truth)
    assert ours.report.overall_accuracy >= base.report.overall_accuracy - 0.02


def test_baseline_modes():
    src, tgt, cat, truth = synthetic(seed=10, ratio=0.0, n_source_unknown=0, n_target_unknown=0)
    with pytest.raises(ConfigError):
        baseline(src, tgt, cat, SvmConfig(), "t")
    with pytest.raises(ConfigError):
        baseline(src, tgt, cat, SvmConfig(), "x")
    marks = [truth[i] if i % 10 == 0 else None for i in range(len(tgt))]
    run = baseline(src, tgt.with_labels(marks), cat, SvmConfig(), "t", truth)
    assert run.report.overall_accuracy > 0.9
