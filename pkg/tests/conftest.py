import itertools

import numpy as np
import pytest
from numba import njit
from scipy.spatial.distance import cdist

from awhmm import Gaussian, GmmHmm


def random_spd(rng, d, scale=1.0):
    b = rng.normal(size=(d, d))
    return scale * (b @ b.T / d + 0.1 * np.eye(d))


def random_gaussian(rng, d, spread=3.0):
    return Gaussian(rng.normal(scale=spread, size=d), random_spd(rng, d))


def random_model(rng, m, d, spread=3.0):
    trans = rng.dirichlet(np.ones(m), size=m)
    return GmmHmm(trans, tuple(random_gaussian(rng, d, spread) for _ in range(m)))


def brute_force_transport(cost, mu, nu):
    """Minimum over all basic feasible solutions of the transportation LP."""
    m, n = cost.shape
    cells = list(itertools.product(range(m), range(n)))
    a_eq = np.zeros((m + n, m * n))
    for k, (i, j) in enumerate(cells):
        a_eq[i, k] = 1.0
        a_eq[m + j, k] = 1.0
    b_eq = np.concatenate([mu, nu])
    best = np.inf
    for size in range(1, m + n):
        for support in itertools.combinations(range(m * n), size):
            sub = a_eq[:, support]
            if np.linalg.matrix_rank(sub) < size:
                continue
            x, *_ = np.linalg.lstsq(sub, b_eq, rcond=None)
            if np.any(x < -1e-12) or np.max(np.abs(sub @ x - b_eq)) > 1e-10:
                continue
            best = min(best, float(sum(x[k] * cost[cells[s]] for k, s in enumerate(support))))
    return best


def empirical_wasserstein(x, y, p=1.0):
    """Exact OT between two equal-size uniform point clouds (POT network simplex)."""
    ot = pytest.importorskip("ot")
    cost = cdist(x, y) ** p
    w = np.full(len(x), 1.0 / len(x))
    v = np.full(len(y), 1.0 / len(y))
    return float(ot.emd2(w, v, cost, numItermax=10_000_000)) ** (1.0 / p)


@njit(cache=True)
def _auction_phase(benefit, prices, assigned, eps):
    n = benefit.shape[0]
    owner = np.full(n, -1)
    assigned[:] = -1
    queue = np.arange(n)
    head, tail, waiting = 0, n, n
    while waiting > 0:
        i = queue[head % n]
        head += 1
        waiting -= 1
        best, second, jbest = -np.inf, -np.inf, -1
        for j in range(n):
            v = benefit[i, j] - prices[j]
            if v > best:
                second, best, jbest = best, v, j
            elif v > second:
                second = v
        prices[jbest] += best - second + eps
        prev = owner[jbest]
        owner[jbest] = i
        assigned[i] = jbest
        if prev >= 0:
            assigned[prev] = -1
            queue[tail % n] = prev
            tail += 1
            waiting += 1


def exact_assignment_cost(x, y, p=1.0, rel_eps=1e-9):
    """Exact OT cost between equal-size uniform clouds (mean of ``||x - y||**p``).

    The optimal plan is a permutation.  One dimension is solved by sorting;
    otherwise by epsilon-scaling forward auction, whose final assignment is
    within ``eps_final = rel_eps * max cost`` of the optimal mean cost.
    """
    if len(x) != len(y):
        raise ValueError("clouds must have equal size")
    if x.shape[1] == 1:
        return float(np.mean(np.abs(np.sort(x[:, 0]) - np.sort(y[:, 0])) ** p))
    benefit = cdist(x, y) if p == 1 else cdist(x, y) ** p
    scale = float(benefit.max()) or 1.0
    np.negative(benefit, out=benefit)
    n = len(x)
    prices = np.zeros(n)
    assigned = np.empty(n, dtype=np.int64)
    eps, eps_final = scale / 4, rel_eps * scale
    while True:
        _auction_phase(benefit, prices, assigned, eps)
        if eps <= eps_final:
            break
        eps = max(eps / 8, eps_final)
    return float(-np.mean(benefit[np.arange(n), assigned]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
