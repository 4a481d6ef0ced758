import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from anne import (
    ClusterSpec,
    Dataset,
    NoiseSpec,
    generate_clusters,
    generate_openset_pool,
    inject_asymmetric,
    inject_instance_dependent,
    inject_openset,
    inject_symmetric,
)
from anne.errors import (
    DimensionMismatch,
    InsufficientOodPool,
    InvalidMapping,
    InvalidSpec,
    MissingTrueLabels,
)


def test_generated_clusters_are_linearly_separable():
    spec = ClusterSpec(class_count=2, dim=2, samples_per_class=100,
                       centroid_separation=10.0, intra_class_std=1.0, seed=3)
    ds = generate_clusters(spec)
    clf = LogisticRegression().fit(ds.features, ds.true_labels)
    assert clf.score(ds.features, ds.true_labels) >= 0.99


def test_generate_is_deterministic():
    spec = ClusterSpec(4, 8, 50, 5.0, seed=42)
    assert generate_clusters(spec).equals(generate_clusters(spec))


def test_generate_centroid_separation_holds():
    spec = ClusterSpec(6, 16, 20, 3.5, seed=9)
    ds = generate_clusters(spec)
    feats = ds.features.astype(np.float64)
    means = np.stack([feats[ds.true_labels == c].mean(0) for c in range(6)])
    diff = means[:, None] - means[None, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    iu = np.triu_indices(6, k=1)
    # empirical means wobble around the true centroids by ~std/sqrt(n)
    assert dist[iu].min() > 3.5 - 4 * (1.0 / np.sqrt(20))


def test_invalid_cluster_spec():
    with pytest.raises(InvalidSpec):
        ClusterSpec(2, 2, 0, 1.0)
    with pytest.raises(InvalidSpec):
        ClusterSpec(2, 2, 10, -1.0)
    with pytest.raises(InvalidSpec):
        NoiseSpec("bogus")
    with pytest.raises(InvalidSpec):
        NoiseSpec("symmetric", eta=1.0)


def clean_dataset(n_per_class=100, c=4, d=6, seed=0, sep=8.0):
    return generate_clusters(ClusterSpec(c, d, n_per_class, sep, seed=seed))


def test_symmetric_zero_eta_is_identity():
    ds = clean_dataset()
    out = inject_symmetric(ds, 0.0, seed=5)
    assert np.array_equal(out.noisy_labels, ds.true_labels)
    assert np.array_equal(out.features, ds.features)


def test_symmetric_requires_true_labels():
    ds = clean_dataset()
    bare = Dataset(ds.features, ds.noisy_labels, ds.class_count)
    with pytest.raises(MissingTrueLabels):
        inject_symmetric(bare, 0.2, seed=0)


def test_symmetric_flip_rate_three_sigma():
    ds = clean_dataset(n_per_class=5000, c=10, d=4, seed=1)
    out = inject_symmetric(ds, 0.5, seed=11)
    rate = float((out.noisy_labels != out.true_labels).mean())
    assert 0.4935 <= rate <= 0.5065  # 3 sigma of Bin(50000, 0.5)


def test_symmetric_flips_uniform_over_other_classes():
    ds = clean_dataset(n_per_class=5000, c=10, d=4, seed=2)
    out = inject_symmetric(ds, 0.5, seed=12)
    flipped = out.noisy_labels != out.true_labels
    # per destination cell of one source class: p = eta/(C-1)
    src = out.true_labels == 3
    n_src = int(src.sum())
    p_cell = 0.5 / 9
    bound = 3 * np.sqrt(p_cell * (1 - p_cell) / n_src)
    for dst in range(10):
        if dst == 3:
            continue
        frac = float((src & flipped & (out.noisy_labels == dst)).mean() * len(src) / n_src)
        assert abs(frac - p_cell) <= bound


def test_symmetric_two_class_high_eta():
    ds = clean_dataset(n_per_class=5000, c=2, d=3, seed=3)
    out = inject_symmetric(ds, 0.9, seed=13)
    flipped = out.noisy_labels != out.true_labels
    assert abs(flipped.mean() - 0.9) < 3 * np.sqrt(0.09 / 10000)
    assert np.array_equal(out.noisy_labels[flipped], 1 - out.true_labels[flipped])


def test_symmetric_deterministic_and_order_independent():
    ds = clean_dataset(seed=4)
    a = inject_symmetric(ds, 0.3, seed=21)
    b = inject_symmetric(ds, 0.3, seed=21)
    assert a.equals(b)
    # permuting the samples permutes the decisions identically
    perm = np.random.default_rng(0).permutation(ds.n)
    shuffled = Dataset(ds.features[perm], ds.noisy_labels[perm], ds.class_count,
                       ds.true_labels[perm], ds.sample_ids[perm])
    c = inject_symmetric(shuffled, 0.3, seed=21)
    assert np.array_equal(c.noisy_labels, a.noisy_labels[perm])


def test_asymmetric_identity_and_cyclic():
    ds = clean_dataset(n_per_class=5000, c=10, d=4, seed=5)
    assert np.array_equal(inject_asymmetric(ds, 0.0, None, 7).noisy_labels,
                          ds.true_labels)
    out = inject_asymmetric(ds, 0.4, None, seed=7)
    flipped = out.noisy_labels != out.true_labels
    assert np.array_equal(out.noisy_labels[flipped],
                          (out.true_labels[flipped] + 1) % 10)
    assert abs(flipped.mean() - 0.4) <= 3 * np.sqrt(0.24 / 50000)


def test_asymmetric_partial_mapping_swap():
    ds = clean_dataset(c=4, seed=6)
    out = inject_asymmetric(ds, 0.5, {0: 1, 1: 0}, seed=8)
    changed = out.noisy_labels != out.true_labels
    assert set(out.true_labels[changed]) <= {0, 1}


def test_asymmetric_self_loop_rejected():
    ds = clean_dataset(c=5, seed=7)
    with pytest.raises(InvalidMapping):
        inject_asymmetric(ds, 0.4, {3: 3}, seed=0)
    with pytest.raises(InvalidMapping):
        inject_asymmetric(ds, 0.4, {0: 1}, seed=0)  # not a permutation of {0}


def test_idn_zero_eta_identity():
    ds = clean_dataset(seed=8)
    out = inject_instance_dependent(ds, 0.0, seed=9)
    assert np.array_equal(out.noisy_labels, ds.true_labels)


def test_idn_flips_toward_nearest_foreign_centroid():
    # classes on a line: 0 at x=0, 1 at x=10, 2 at x=20; class 1 is midway
    rng = np.random.default_rng(10)
    per = 500
    feats = np.concatenate([
        rng.normal([0.0, 0.0], 0.5, (per, 2)),
        rng.normal([10.0, 0.0], 0.5, (per, 2)),
        rng.normal([20.0, 0.0], 0.5, (per, 2)),
    ]).astype(np.float32)
    labels = np.repeat(np.arange(3, dtype=np.int32), per)
    ds = Dataset(feats, labels, 3, labels.copy())
    out = inject_instance_dependent(ds, 0.4, seed=14)
    flipped = out.noisy_labels != out.true_labels

    # oracle: recompute nearest foreign centroid per sample
    cents = np.stack([feats[labels == c].mean(0) for c in range(3)])
    d2 = ((feats[:, None, :].astype(np.float64) - cents[None]) ** 2).sum(-1)
    d2[np.arange(len(labels)), labels] = np.inf
    expected = d2.argmin(1)
    assert np.array_equal(out.noisy_labels[flipped], expected[flipped])
    # far classes flip exclusively to the midway class
    assert set(out.noisy_labels[flipped & (labels == 0)]) == {1}
    assert set(out.noisy_labels[flipped & (labels == 2)]) == {1}


def test_idn_flip_fraction():
    ds = clean_dataset(n_per_class=5000, c=10, d=4, seed=11)
    out = inject_instance_dependent(ds, 0.5, seed=15)
    rate = float((out.noisy_labels != out.true_labels).mean())
    # truncation at +-4 sigma is symmetric for eta=0.5, so E[rate] = 0.5
    assert 0.485 <= rate <= 0.515


def test_openset_zero_rho_identity():
    ds = clean_dataset(seed=12)
    pool = generate_openset_pool(ClusterSpec(4, 6, 50, 8.0, ood_class_count=3, seed=30))
    out = inject_openset(ds, pool, 0.0, 0.5, seed=16)
    assert out.equals(Dataset(ds.features, ds.true_labels, ds.class_count,
                              ds.true_labels, ds.sample_ids))


def test_openset_pure_closed_matches_symmetric_structure():
    ds = clean_dataset(n_per_class=2500, c=4, d=5, seed=13)
    pool = generate_openset_pool(ClusterSpec(4, 5, 10, 8.0, ood_class_count=3, seed=31))
    out = inject_openset(ds, pool, 0.3, 1.0, seed=17)
    changed = out.noisy_labels != out.true_labels
    assert changed.sum() == int(np.floor(0.3 * ds.n))
    assert np.array_equal(out.features, ds.features)
    assert (out.true_labels < ds.class_count).all()


def test_openset_counts_and_disjointness():
    ds = clean_dataset(n_per_class=2500, c=4, d=5, seed=14)
    pool = generate_openset_pool(ClusterSpec(4, 5, 1500, 8.0, ood_class_count=4, seed=32))
    out = inject_openset(ds, pool, 0.6, 0.5, seed=18)
    n = ds.n  # 10000
    replaced = out.true_labels == ds.class_count
    assert replaced.sum() == 3000
    flipped = (~replaced) & (out.noisy_labels != out.true_labels)
    assert flipped.sum() <= 3000  # flips can collide only with themselves
    # exactly floor counts were SELECTED for flipping; a flip always lands
    # on a different class, so selected == flipped
    assert flipped.sum() == 3000
    assert not (replaced & flipped).any()
    # features unchanged outside the replaced set
    assert np.array_equal(out.features[~replaced], ds.features[~replaced])
    assert not np.array_equal(out.features[replaced], ds.features[replaced])


def test_openset_errors():
    ds = clean_dataset(seed=15)
    bad_dim = generate_clusters(ClusterSpec(3, 5, 10, 8.0, seed=33))
    with pytest.raises(DimensionMismatch):
        inject_openset(ds, bad_dim, 0.5, 0.5, seed=0)
    tiny = generate_clusters(ClusterSpec(3, 6, 2, 8.0, seed=34))
    with pytest.raises(InsufficientOodPool):
        inject_openset(ds, tiny, 0.8, 0.0, seed=0)
