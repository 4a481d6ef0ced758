import numpy as np
import pytest

from anne import (
    ClusterSpec,
    Dataset,
    SoftmaxModel,
    evaluate_accuracy,
    generate_clusters,
    per_subset_metrics,
    selection_metrics,
)
from anne.confidence import ConfidencePartition
from anne.errors import DimensionMismatch, EmptyTestSet, MissingTrueLabels
from anne.pipeline import SelectionResult


def make_result(n, clean):
    clean = np.asarray(clean, dtype=np.int64)
    noisy = np.setdiff1d(np.arange(n), clean)
    return SelectionResult(clean, noisy, np.full(n, "fine"),
                           np.zeros(n, dtype=np.int32))


def noisy_dataset(n=100, frac_noisy=0.2, seed=0):
    rng = np.random.default_rng(seed)
    true = rng.integers(0, 4, n).astype(np.int32)
    noisy = true.copy()
    flip = rng.permutation(n)[: int(frac_noisy * n)]
    noisy[flip] = (true[flip] + 1) % 4
    feats = rng.standard_normal((n, 3)).astype(np.float32)
    ds = Dataset(feats, noisy, 4, true)
    truly_clean = np.nonzero(noisy == true)[0]
    return ds, truly_clean


def test_exact_selection_is_perfect():
    ds, truly_clean = noisy_dataset()
    res = make_result(ds.n, truly_clean)
    res = SelectionResult(res.clean, res.noisy, res.provenance, ds.noisy_labels)
    m = selection_metrics(res, ds)
    assert m.precision == m.recall == m.f1 == 1.0
    assert m.clean_rate == m.precision
    assert m.noisy_precision == m.noisy_recall == 1.0


def test_select_all_gives_noise_rate_precision():
    ds, truly_clean = noisy_dataset(n=200, frac_noisy=0.2, seed=3)
    res = make_result(ds.n, np.arange(ds.n))
    res = SelectionResult(res.clean, res.noisy, res.provenance, ds.noisy_labels)
    m = selection_metrics(res, ds)
    assert abs(m.precision - 0.8) < 1e-12
    assert m.recall == 1.0
    assert m.selection_size == 200


def test_empty_selection_is_zero():
    ds, _ = noisy_dataset(seed=5)
    res = make_result(ds.n, [])
    res = SelectionResult(res.clean, res.noisy, res.provenance, ds.noisy_labels)
    m = selection_metrics(res, ds)
    assert m.precision == 0.0 and m.recall == 0.0 and m.f1 == 0.0


def test_requires_true_labels():
    ds, truly_clean = noisy_dataset(seed=7)
    bare = Dataset(ds.features, ds.noisy_labels, ds.class_count)
    res = make_result(ds.n, truly_clean)
    res = SelectionResult(res.clean, res.noisy, res.provenance, ds.noisy_labels)
    with pytest.raises(MissingTrueLabels):
        selection_metrics(res, bare)


def confusion_oracle(selected, truly_clean, n):
    sel = np.zeros(n, dtype=bool)
    sel[selected] = True
    tc = np.zeros(n, dtype=bool)
    tc[truly_clean] = True
    tp = int((sel & tc).sum())
    fp = int((sel & ~tc).sum())
    fn = int((~sel & tc).sum())
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return p, r


def test_matches_confusion_matrix_oracle():
    for seed in range(5):
        ds, truly_clean = noisy_dataset(n=150, frac_noisy=0.3, seed=seed)
        rng = np.random.default_rng(seed + 100)
        selected = rng.permutation(ds.n)[: rng.integers(1, ds.n)]
        res = make_result(ds.n, np.sort(selected))
        res = SelectionResult(res.clean, res.noisy, res.provenance, ds.noisy_labels)
        m = selection_metrics(res, ds)
        p, r = confusion_oracle(selected, truly_clean, ds.n)
        assert m.precision == p and m.recall == r


def test_open_set_sentinel_never_clean():
    feats = np.ones((4, 2), dtype=np.float32)
    noisy = np.array([0, 1, 0, 1], dtype=np.int32)
    true = np.array([0, 1, 2, 2], dtype=np.int32)  # 2 == sentinel (C=2)
    ds = Dataset(feats, noisy, 2, true)
    res = make_result(4, np.arange(4))
    res = SelectionResult(res.clean, res.noisy, res.provenance, noisy)
    m = selection_metrics(res, ds)
    assert abs(m.precision - 0.5) < 1e-12


def test_per_subset_metrics_and_empty_subset():
    ds, truly_clean = noisy_dataset(n=60, seed=11)
    res = make_result(ds.n, truly_clean)
    res = SelectionResult(res.clean, res.noisy, res.provenance, ds.noisy_labels)
    hcs = np.arange(0, 60)
    part = ConfidencePartition(0.5, hcs, np.array([], dtype=np.int64),
                               np.array([], dtype=np.int64),
                               0.9, 0.1, 0.0, 0.0, 0.8, 1.0)
    out = per_subset_metrics(res, part, ds)
    assert out["hcs"].precision == 1.0
    assert out["lcs"] is None


def test_accuracy_uniform_model():
    ds = generate_clusters(ClusterSpec(10, 4, 1000, 5.0, seed=13))
    model = SoftmaxModel(np.zeros((10, 4)), np.zeros(10), np.eye(4)[:2], np.eye(2))
    acc = evaluate_accuracy(model, ds)
    # argmax ties at class 0; balanced classes make that 1/10 exactly
    assert abs(acc - 0.1) < 1e-12


def test_accuracy_memorizer_and_errors():
    feats = np.array([[1.0, 0.0]], dtype=np.float32)
    ds = Dataset(feats, np.array([1], dtype=np.int32), 2, np.array([1], dtype=np.int32))
    model = SoftmaxModel(np.array([[0.0, 0.0], [5.0, 0.0]]), np.zeros(2),
                         np.eye(2), np.eye(2))
    assert evaluate_accuracy(model, ds) == 1.0

    empty = Dataset(np.empty((0, 2), dtype=np.float32),
                    np.empty(0, dtype=np.int32), 2)
    with pytest.raises(EmptyTestSet):
        evaluate_accuracy(model, empty)
    wrong = Dataset(np.ones((2, 3), dtype=np.float32),
                    np.zeros(2, dtype=np.int32), 2)
    with pytest.raises(DimensionMismatch):
        evaluate_accuracy(model, wrong)


def test_metrics_invariant_under_permutation():
    ds, truly_clean = noisy_dataset(n=80, seed=17)
    rng = np.random.default_rng(19)
    selected = np.sort(rng.permutation(80)[:30])
    res = SelectionResult(selected, np.setdiff1d(np.arange(80), selected),
                          np.full(80, "fine"), ds.noisy_labels)
    m1 = selection_metrics(res, ds)

    perm = rng.permutation(80)
    ds2 = Dataset(ds.features[perm], ds.noisy_labels[perm], 4, ds.true_labels[perm])
    inv = np.empty(80, dtype=np.int64)
    inv[perm] = np.arange(80)
    sel2 = np.sort(inv[selected])
    res2 = SelectionResult(sel2, np.setdiff1d(np.arange(80), sel2),
                           np.full(80, "fine"), ds2.noisy_labels)
    m2 = selection_metrics(res2, ds2)
    assert m1 == m2
