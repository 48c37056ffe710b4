import numpy as np
import pytest

from awhmm import (Gaussian, GmmHmm, DistanceMatrix, knn1_accuracy, maw, pairwise_distance_matrix,
                   precision_recall, select_alpha)
from awhmm._rng import derive_seed
from awhmm.distance import iaw
from conftest import random_model


def block_matrix(labels, rng=None, noise=0.0):
    labels = np.asarray(labels)
    d = (labels[:, None] != labels[None, :]).astype(float) + 0.1
    if rng is not None:
        e = rng.random(d.shape) * noise
        d = d + e + e.T
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d, labels, "test")


def test_pairwise_single_pair(rng):
    h1, h2 = random_model(rng, 2, 2), random_model(rng, 3, 2)
    dm = pairwise_distance_matrix([h1, h2], [0, 1], "MAW")
    assert dm.values[0, 1] == dm.values[1, 0] == maw(h1, h2).value
    assert np.all(np.diag(dm.values) == 0)


def test_pairwise_iaw_pair_seed(rng):
    h1, h2 = random_model(rng, 2, 2), random_model(rng, 2, 2)
    dm = pairwise_distance_matrix([h1, h2], method="IAW", params={"n": 100}, base_seed=7)
    assert dm.values[0, 1] == iaw(h1, h2, n=100, seed=derive_seed(7, 0, 1)).value


def test_pairwise_permutation_equivariance(rng):
    models = [random_model(rng, 2, 2) for _ in range(5)]
    perm = rng.permutation(5)
    for method, params in (("MAW", {}), ("IAW", {"n": 80}), ("KL", {"length": 50})):
        a = pairwise_distance_matrix(models, method=method, params=params, base_seed=3)
        b = pairwise_distance_matrix([models[k] for k in perm], method=method, params=params,
                                     base_seed=3, keys=perm)
        assert np.array_equal(b.values, a.values[np.ix_(perm, perm)])
        assert np.array_equal(a.values, a.values.T)


def test_pairwise_threads_identical(rng):
    models = [random_model(rng, 2, 2) for _ in range(5)]
    a = pairwise_distance_matrix(models, method="IAW", params={"n": 60}, n_jobs=1)
    b = pairwise_distance_matrix(models, method="IAW", params={"n": 60}, n_jobs=3)
    assert np.array_equal(a.values, b.values)


def test_pairwise_error_names_pair():
    good = GmmHmm([[1.0]], (Gaussian([0.0, 0.0], np.eye(2)),))
    with pytest.raises(ValueError, match="alpha"):
        pairwise_distance_matrix([good, good], method="MAW", params={"alpha": 2.0})
    with pytest.raises(ValueError):
        pairwise_distance_matrix([good], method="MAW")


def test_at_alpha_matches_direct(rng):
    models = [random_model(rng, 2, 2) for _ in range(4)]
    base = pairwise_distance_matrix(models, method="MAW", params={"alpha": 0.5})
    for alpha in (0.0, 0.3, 0.7, 1.0):
        direct = pairwise_distance_matrix(models, method="MAW", params={"alpha": alpha})
        assert np.max(np.abs(base.at_alpha(alpha).values - direct.values)) <= 1e-12


def test_pr_perfect_separation():
    labels = np.repeat(np.arange(5), 10)
    curve = precision_recall(block_matrix(labels))
    assert np.allclose(curve.precision, 1.0)
    assert np.allclose(curve.recall, np.arange(1, 10) / 9)
    assert curve.mean_average_precision == 1.0


def test_pr_random_is_near_prior():
    rng = np.random.default_rng(0)
    labels = np.repeat(np.arange(5), 10)
    means = []
    for _ in range(20):
        d = rng.random((50, 50))
        d = d + d.T
        np.fill_diagonal(d, 0)
        means.append(precision_recall(DistanceMatrix(d, rng.permutation(labels), "x")).precision.mean())
    assert abs(np.mean(means) - 9 / 49) <= 0.1


def test_pr_monotone_invariance(rng):
    labels = np.repeat(np.arange(3), 4)
    dm = block_matrix(labels, rng, noise=2.0)
    a = precision_recall(dm)
    b = precision_recall(DistanceMatrix(np.exp(3 * dm.values), labels, "x"))
    assert np.array_equal(a.precision, b.precision)


def test_pr_singleton_class_skipped():
    dm = block_matrix([0, 0, 1])
    with pytest.warns(RuntimeWarning):
        curve = precision_recall(dm)
    assert curve.skipped == [2]


def test_pr_tie_break_by_index():
    d = np.ones((3, 3))
    np.fill_diagonal(d, 0)
    with pytest.warns(RuntimeWarning):
        curve = precision_recall(DistanceMatrix(d, np.array([0, 1, 0]), "x"))
    # query 0: item 1 (wrong) comes before item 2 on the tie
    assert curve.per_query[0][0] == 0.5


def test_knn1_examples(rng):
    labels = np.repeat(np.arange(3), 4)
    assert knn1_accuracy(block_matrix(labels)) == 1.0
    assert knn1_accuracy(DistanceMatrix(np.array([[0, 1.0], [1.0, 0]]), np.array([0, 1]), "x")) == 0.0
    for _ in range(20):
        n = 12
        d = rng.random((n, n))
        d = d + d.T
        lab = rng.integers(0, 3, n)
        expected = 0
        for q in range(n):
            others = [j for j in range(n) if j != q]
            best = min(others, key=lambda j: (d[q, j], j))
            expected += lab[best] == lab[q]
        assert knn1_accuracy(DistanceMatrix(d, lab, "x")) == expected / n


def transition_only_models():
    # class is carried by the transition matrix; a nuisance shift of the means
    # makes the marginal term prefer neighbours from other classes
    models, labels = [], []
    for c, t in enumerate(([[0.9, 0.1], [0.1, 0.9]], [[0.5, 0.5], [0.5, 0.5]], [[0.7, 0.3], [0.3, 0.7]])):
        for shift in (0.0, 3.0):
            comps = (Gaussian([shift, 0.0], np.eye(2)), Gaussian([shift + 5.0, 5.0], np.eye(2)))
            models.append(GmmHmm(t, comps))
            labels.append(c)
    return models, labels


def test_select_alpha_transition_only():
    models, labels = transition_only_models()
    alpha, table = select_alpha(models, labels, "MAW")
    acc = dict(table)
    assert acc[0.0] == 0.0 and acc[1.0] == 1.0
    assert alpha == min(a for a, v in table if v == 1.0)
    assert [a for a, _ in table] == [round(0.1 * k, 1) for k in range(11)]


def test_select_alpha_means_only():
    t = [[0.8, 0.2], [0.2, 0.8]]
    models, labels = [], []
    for c, shift in enumerate((0.0, 3.0, 6.0)):
        comps = (Gaussian([shift, 0.0], np.eye(2)), Gaussian([shift, 10.0], np.eye(2)))
        models += [GmmHmm(t, comps), GmmHmm(t, comps)]
        labels += [c, c]
    alpha, table = select_alpha(models, labels, "MAW")
    assert alpha == 0.0
    assert all(acc == 1.0 for a, acc in table if a < 1.0)


def test_select_alpha_single_value():
    models, labels = transition_only_models()
    assert select_alpha(models, labels, "MAW", grid=[0.4])[0] == 0.4
