import json

import numpy as np
import pytest

from awhmm import (Gaussian, GmmHmm, iaw, kl_gaussian, kl_hmm_mc, log_pdf, maw, permute_states,
                   register_transition, sample_hmm, transition_discrepancy, w2_gaussian)
from awhmm._rng import derive_seed
from awhmm.errors import DimensionError
from awhmm.mixture import RegistrationMatrix
from conftest import random_model


def two_state(t, comps=None):
    comps = comps or (Gaussian([0.0, 0.0], np.eye(2)), Gaussian([4.0, 1.0], 0.5 * np.eye(2)))
    return GmmHmm(t, comps)


def separated(m=3):
    comps = tuple(Gaussian([10.0 * k, 0.0], 0.3 * np.eye(2)) for k in range(m))
    t = np.full((m, m), 0.1 / (m - 1)) + np.eye(m) * (0.9 - 0.1 / (m - 1))
    return GmmHmm(t, comps)


def test_register_transition_permutation():
    t2 = np.array([[0.7, 0.2, 0.1], [0.3, 0.3, 0.4], [0.05, 0.15, 0.8]])
    perm = [2, 0, 1]
    pi = np.array([0.2, 0.5, 0.3])
    w = np.zeros((3, 3))
    for j, i in enumerate(perm):
        w[i, j] = pi[i]
    # state i of model 1 is state j of model 2 when perm[j] == i
    inv = np.argsort(perm)
    expected = t2[np.ix_(inv, inv)]
    assert np.allclose(register_transition(t2, w, "toward-1"), expected, atol=1e-15)


def test_register_transition_trivial_and_stochastic(rng):
    assert np.array_equal(register_transition(np.ones((1, 1)), np.ones((1, 1))), [[1.0]])
    for _ in range(100):
        m1, m2 = rng.integers(1, 6, size=2)
        w = rng.random((m1, m2)) * (rng.random((m1, m2)) > 0.3)
        if not w.any():
            continue
        w /= w.sum()
        t2 = rng.dirichlet(np.ones(m2), size=m2)
        t1 = rng.dirichlet(np.ones(m1), size=m1)
        assert np.max(np.abs(register_transition(t2, w, "toward-1").sum(axis=1) - 1)) <= 1e-9
        assert np.max(np.abs(register_transition(t1, w, "toward-2").sum(axis=1) - 1)) <= 1e-9


def test_register_transition_errors():
    with pytest.raises(ValueError):
        register_transition(np.eye(2), np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        register_transition(np.eye(3), np.eye(2) / 2)
    with pytest.raises(ValueError):
        register_transition(np.eye(2), np.eye(2) / 2, "sideways")


def test_transition_discrepancy_zero_cases(rng):
    h = random_model(rng, 3, 2)
    w = np.diag(h.stationary)
    assert transition_discrepancy(h, h, w) == 0.0
    perm = [1, 2, 0]
    hp = permute_states(h, perm)
    hard = np.zeros((3, 3))
    for j, i in enumerate(perm):
        hard[i, j] = h.stationary[i]
    assert transition_discrepancy(h, hp, hard) == pytest.approx(0.0, abs=1e-12)


def test_transition_discrepancy_hand_computed():
    h1 = two_state([[0.8, 0.2], [0.2, 0.8]])
    h2 = two_state([[0.6, 0.4], [0.4, 0.6]])
    w = np.diag([0.5, 0.5])
    gap = w2_gaussian(*h1.components)
    # each row moves 0.2 of mass across the two-point metric, both directions
    directed = 0.5 * 0.2 * gap + 0.5 * 0.2 * gap
    assert transition_discrepancy(h1, h2, w, p=1) == pytest.approx(2 * directed, abs=1e-12)
    assert transition_discrepancy(h1, h2, w, p=2) == pytest.approx(
        np.sqrt(2 * (0.5 * 0.2 * gap**2 + 0.5 * 0.2 * gap**2)), abs=1e-12)


def test_maw_identity_and_symmetry(rng):
    for _ in range(50):
        h1 = random_model(rng, int(rng.integers(1, 4)), 2)
        h2 = random_model(rng, int(rng.integers(1, 4)), 2)
        for p in (1.0, 2.0):
            assert 0.0 <= maw(h1, h1, p=p).value <= 1e-10
            a, b = maw(h1, h2, p=p), maw(h2, h1, p=p)
            assert a.value >= 0 and abs(a.value - b.value) <= 1e-9


def test_maw_permutation_invariance(rng):
    for _ in range(30):
        h = random_model(rng, 3, 3)
        assert maw(h, permute_states(h, rng.permutation(3))).value <= 1e-8


def test_report_decomposition(rng):
    h1, h2 = random_model(rng, 3, 2), random_model(rng, 2, 2)
    for alpha in (0.0, 0.3, 1.0):
        rep = maw(h1, h2, alpha=alpha)
        assert rep.value == (1 - alpha) * rep.marginal_term + alpha * rep.transition_term
        assert rep.method == "MAW" and rep.alpha == alpha
    json.dumps(rep.to_dict())


def test_maw_argument_checks(rng):
    h = random_model(rng, 2, 2)
    with pytest.raises(ValueError):
        maw(h, h, alpha=1.5)
    with pytest.raises(DimensionError):
        maw(h, random_model(rng, 2, 3))


def test_iaw_single_state_equals_maw(rng):
    h1, h2 = random_model(rng, 1, 2), random_model(rng, 1, 2)
    assert iaw(h1, h2, n=50, seed=1).value == maw(h1, h2).value


def test_iaw_deterministic(rng):
    h1, h2 = random_model(rng, 2, 2), random_model(rng, 3, 2)
    a, b = iaw(h1, h2, n=300, seed=5), iaw(h1, h2, n=300, seed=5)
    assert a.value == b.value and a.marginal_term == b.marginal_term
    assert a.sample_count == 300 and a.registration_residual >= 0


def test_iaw_self_distance_small():
    h = separated(3)
    comps = h.components
    scale = np.mean([w2_gaussian(a, b) for i, a in enumerate(comps) for b in comps[i + 1:]])
    assert iaw(h, h, n=2000, seed=0).value <= 0.05 * scale


def test_kl_self_near_zero():
    h = two_state([[0.8, 0.2], [0.3, 0.7]])
    vals = np.array([kl_hmm_mc(h, h, length=200, seed=s, symmetrize=False).value for s in range(20)])
    assert np.all(vals == 0.0)
    vals = np.array([kl_hmm_mc(h, h, length=200, seed=s).value for s in range(20)])
    assert abs(vals.mean()) <= 3 * max(vals.std(ddof=1), 1e-15) / np.sqrt(20)


def test_kl_single_state_matches_closed_form():
    a = Gaussian([0.0, 0.0], np.eye(2))
    b = Gaussian([0.5, -0.3], [[1.5, 0.2], [0.2, 0.8]])
    h1, h2 = GmmHmm([[1.0]], (a,)), GmmHmm([[1.0]], (b,))
    n = 10_000
    rep = kl_hmm_mc(h1, h2, length=n, seed=3, symmetrize=False)
    obs = sample_hmm(h1, n, derive_seed(3, 0)).observations
    per_point = log_pdf(a, obs) - log_pdf(b, obs)
    se = per_point.std(ddof=1) / np.sqrt(n)
    assert rep.value == pytest.approx(per_point.mean(), abs=1e-10)
    assert abs(rep.value - kl_gaussian(a, b)) <= 3 * se


def test_kl_swapped_arguments_with_swapped_seeds(rng):
    h1, h2 = random_model(rng, 2, 2), random_model(rng, 3, 2)
    a = kl_hmm_mc(h1, h2, length=300, sub_seeds=(11, 22))
    b = kl_hmm_mc(h2, h1, length=300, sub_seeds=(22, 11))
    assert a.value == b.value
    assert a.marginal_term == b.transition_term


def test_zero_weight_state_registration():
    comps = (Gaussian([0.0], [[1.0]]), Gaussian([5.0], [[1.0]]), Gaussian([9.0], [[1.0]]))
    h1 = GmmHmm([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.3, 0.3, 0.4]], comps)
    h2 = GmmHmm([[0.6, 0.4], [0.3, 0.7]], comps[:2])
    rep = maw(h1, h2)
    assert np.isfinite(rep.value) and rep.value >= 0
    reg = RegistrationMatrix(np.array([[0.5, 0.0], [0.0, 0.5], [0.0, 0.0]]), "MAW-exact")
    assert np.allclose(register_transition(h2.transition, reg).sum(axis=1), 1.0)
