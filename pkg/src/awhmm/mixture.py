"""Gaussian mixtures and the two state-registration schemes.

A registration matrix is a nonnegative ``M1 x M2`` coupling of the two
mixtures' component weights.  The minimized registration solves a small
exact transport problem whose costs are Gaussian W2 distances; the improved
registration pushes a Sinkhorn coupling of Monte-Carlo samples through the
component posteriors of each mixture.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from ._rng import derive_seed, make_rng
from .errors import DimensionError
from .gaussian import Gaussian, log_pdf, pairwise_w2
from .transport import SinkhornParams, sinkhorn, solve_exact_transport

MAW_EXACT = "MAW-exact"
IAW_EMPIRICAL = "IAW-empirical"


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    components: tuple
    weights: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a mixture needs at least one component")
        if not all(isinstance(c, Gaussian) for c in comps):
            raise TypeError("components must be Gaussian instances")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise DimensionError(f"components have mixed dimensions {sorted(dims)}")
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size != len(comps):
            raise ValueError(f"{w.size} weights for {len(comps)} components")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be a probability vector")
        w.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.components[0].dim

    @property
    def n_components(self):
        return len(self.components)

    def log_component_densities(self, x):
        """``(n, M)`` matrix of ``log phi_j(x_i)``."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return np.column_stack([log_pdf(c, pts) for c in self.components])

    def log_pdf(self, x):
        with np.errstate(divide="ignore"):
            lw = np.log(self.weights)
        out = logsumexp(self.log_component_densities(x) + lw, axis=1)
        return float(out[0]) if np.ndim(x) == 1 else out


@dataclass(frozen=True, eq=False)
class RegistrationMatrix:
    weights: np.ndarray
    source: str
    marginal_residual: float = 0.0
    objective: float | None = None

    @property
    def shape(self):
        return self.weights.shape


def _check_pair(m1, m2):
    if m1.dim != m2.dim:
        raise DimensionError(f"mixtures live in different dimensions ({m1.dim} vs {m2.dim})")


def registration_maw(m1, m2, p=1.0, cost=None):
    """Registration minimizing the weighted sum of ``W2(phi_1i, phi_2j)**p``.

    ``cost`` may be passed to reuse a precomputed W2 matrix (unpowered).
    """
    _check_pair(m1, m2)
    if not 0 < p <= 2:
        raise ValueError("p must lie in (0, 2]")
    if cost is None:
        cost = pairwise_w2(m1.components, m2.components)
    plan = solve_exact_transport(np.power(cost, p), m1.weights, m2.weights)
    return RegistrationMatrix(plan.weights, MAW_EXACT, plan.marginal_residual, plan.objective)


def registered_distance(m1, m2, w, p=1.0, cost=None):
    """``(sum_ij w_ij W2(phi_1i, phi_2j)**p) ** (1/p)`` for a given registration."""
    _check_pair(m1, m2)
    weights = w.weights if isinstance(w, RegistrationMatrix) else np.asarray(w, dtype=float)
    if weights.shape != (m1.n_components, m2.n_components):
        raise ValueError(
            f"registration shape {weights.shape} does not match "
            f"({m1.n_components}, {m2.n_components})"
        )
    if cost is None:
        cost = pairwise_w2(m1.components, m2.components)
    total = float(np.sum(weights * np.power(cost, p)))
    return max(total, 0.0) ** (1.0 / p)


def posterior(m, x):
    """Component posterior probabilities at ``x``.

    Returns a length-M vector for a single point or an ``(n, M)`` matrix for
    a point set; computed in the log domain so far-away points do not
    underflow.
    """
    with np.errstate(divide="ignore"):
        lw = np.log(m.weights)
    logp = m.log_component_densities(x) + lw
    logp -= logsumexp(logp, axis=1, keepdims=True)
    post = np.exp(logp)
    post /= post.sum(axis=1, keepdims=True)
    return post[0] if np.ndim(x) == 1 else post


def sample_mixture(m, n, seed, return_labels=False):
    """Draw ``n`` points: component index from the weights, then a Gaussian draw."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    labels = rng.choice(m.n_components, size=n, p=m.weights)
    z = rng.standard_normal((n, m.dim))
    x = np.empty((n, m.dim))
    for k, comp in enumerate(m.components):
        idx = labels == k
        x[idx] = comp.mean + z[idx] @ comp.factor.T
    return (x, labels) if return_labels else x


def registration_iaw(m1, m2, n=1000, p=1.0, seed=0, sinkhorn_params=None):
    """Monte-Carlo registration from a Sinkhorn coupling of samples.

    ``n`` samples are drawn from each mixture (sub-seeds derived from
    ``seed``), coupled by Sinkhorn on cost ``||x - y||**p`` with uniform
    marginals, and the coupling is contracted with the two posterior
    matrices.  The result is not projected back onto the exact marginal
    constraints; the deviation is recorded in ``marginal_residual``.
    """
    _check_pair(m1, m2)
    if n < 2:
        raise ValueError("n must be >= 2")
    params = sinkhorn_params or SinkhornParams()
    x = sample_mixture(m1, n, derive_seed(seed, 0))
    y = sample_mixture(m2, n, derive_seed(seed, 1))
    if m1.n_components == 1 and m2.n_components == 1:
        return RegistrationMatrix(np.ones((1, 1)), IAW_EMPIRICAL, 0.0)
    cost = cdist(x, y)
    if p != 1:
        cost **= p
    uniform = np.full(n, 1.0 / n)
    coupling = sinkhorn(cost, uniform, uniform, params=params)
    w = posterior(m1, x).T @ coupling.weights @ posterior(m2, y)
    residual = float(max(np.max(np.abs(w.sum(axis=1) - m1.weights)),
                         np.max(np.abs(w.sum(axis=0) - m2.weights))))
    return RegistrationMatrix(w, IAW_EMPIRICAL, residual)
