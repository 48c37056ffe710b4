"""Hidden Markov models with one full-covariance Gaussian per state.

Models are assumed stationary: the initial state distribution is always the
stationary distribution of the transition matrix, both when sampling, when
scoring and during estimation.
"""

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from sklearn.cluster import KMeans

from ._kernels import forward_backward, forward_log, sample_chain
from ._rng import derive_seed, make_rng
from .errors import DimensionError, StationaryDistributionError
from .gaussian import Gaussian, log_pdf
from .mixture import GaussianMixture

ROW_TOL = 1e-9
STATIONARY_TOL = 1e-8
TRANSITION_FLOOR = 1e-6


def _check_stochastic(t):
    t = np.asarray(t, dtype=float)
    if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] == 0:
        raise DimensionError(f"transition matrix must be square and nonempty, got {t.shape}")
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise ValueError("transition entries must be finite and nonnegative")
    bad = np.flatnonzero(np.abs(t.sum(axis=1) - 1.0) > ROW_TOL)
    if bad.size:
        raise ValueError(f"transition row {int(bad[0])} sums to {t[bad[0]].sum():.12g}, not 1")
    return t


def stationary_distribution(t):
    """Left fixed vector of a row-stochastic matrix.

    Solves ``(T' - I) pi' = 0`` together with ``sum(pi) = 1`` by least
    squares.  Chains whose second-largest eigenvalue modulus is within 1e-8 of
    one (reducible or periodic) have no unique answer and raise
    :class:`StationaryDistributionError`.
    """
    t = _check_stochastic(t)
    m = t.shape[0]
    if m == 1:
        return np.ones(1)
    moduli = np.sort(np.abs(np.linalg.eigvals(t)))[::-1]
    if moduli[1] >= 1.0 - 1e-8:
        raise StationaryDistributionError(
            f"stationary distribution is not unique: second eigenvalue modulus {moduli[1]:.12g} "
            "(chain is reducible or periodic)"
        )
    lhs = np.vstack([t.T - np.eye(m), np.ones((1, m))])
    rhs = np.zeros(m + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    resid = np.max(np.abs(pi @ t - pi))
    if resid > STATIONARY_TOL:
        raise StationaryDistributionError(f"stationary residual {resid:.3g} exceeds {STATIONARY_TOL}")
    return pi


@dataclass(frozen=True, eq=False)
class GmmHmm:
    """HMM with transition matrix ``transition`` and Gaussian emissions.

    ``metadata`` is free-form (estimation seed, log-likelihood trace, ...)
    and does not take part in equality.
    """

    transition: np.ndarray
    components: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.array(_check_stochastic(self.transition))
        comps = tuple(self.components)
        if len(comps) != t.shape[0]:
            raise DimensionError(f"{len(comps)} emission components for {t.shape[0]} states")
        if not all(isinstance(c, Gaussian) for c in comps):
            raise TypeError("components must be Gaussian instances")
        if len({c.dim for c in comps}) != 1:
            raise DimensionError("emission components have different dimensions")
        t.setflags(write=False)
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "components", comps)

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def dim(self):
        return self.components[0].dim

    @cached_property
    def stationary(self):
        pi = stationary_distribution(self.transition)
        pi.setflags(write=False)
        return pi

    def __eq__(self, other):
        if not isinstance(other, GmmHmm):
            return NotImplemented
        return (np.array_equal(self.transition, other.transition)
                and len(self.components) == len(other.components)
                and all(a == b for a, b in zip(self.components, other.components)))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Sequence:
    observations: np.ndarray
    states: np.ndarray | None = None

    def __post_init__(self):
        obs = np.array(self.observations, dtype=float)
        if obs.ndim == 1:
            obs = obs[:, None]
        if obs.ndim != 2 or obs.shape[0] < 1:
            raise DimensionError(f"observations must be a nonempty (T, d) array, got {obs.shape}")
        if not np.all(np.isfinite(obs)):
            raise ValueError("observations must be finite")
        obs.setflags(write=False)
        object.__setattr__(self, "observations", obs)
        if self.states is not None:
            st = np.array(self.states, dtype=int).reshape(-1)
            if st.size != obs.shape[0]:
                raise DimensionError("state labels do not match the sequence length")
            st.setflags(write=False)
            object.__setattr__(self, "states", st)

    def __len__(self):
        return self.observations.shape[0]

    @property
    def dim(self):
        return self.observations.shape[1]


def _as_sequence(s):
    return s if isinstance(s, Sequence) else Sequence(s)


def marginal_gmm(h):
    """Observation marginal: the emissions weighted by the stationary distribution."""
    return GaussianMixture(h.components, h.stationary)


def conditional_gmm(h, i):
    """Next-observation mixture given current state ``i`` (weights ``T[i, :]``)."""
    if not 0 <= i < h.n_states:
        raise IndexError(f"state index {i} out of range for {h.n_states} states")
    return GaussianMixture(h.components, h.transition[i])


def permute_states(h, perm):
    """Relabel states: new state ``k`` is old state ``perm[k]``."""
    perm = np.asarray(perm, dtype=int)
    if sorted(perm.tolist()) != list(range(h.n_states)):
        raise ValueError("perm must be a permutation of the state indices")
    return GmmHmm(h.transition[np.ix_(perm, perm)], tuple(h.components[k] for k in perm))


def sample_hmm(h, length, seed):
    """Stationary sample path of ``length`` steps; states are recorded."""
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = make_rng(seed)
    u = rng.random(length)
    states = sample_chain(np.cumsum(h.stationary), np.cumsum(h.transition, axis=1), u)
    z = rng.standard_normal((length, h.dim))
    obs = np.empty((length, h.dim))
    for k, comp in enumerate(h.components):
        idx = states == k
        obs[idx] = comp.mean + z[idx] @ comp.factor.T
    return Sequence(obs, states)


def _log_emissions(components, obs):
    return np.column_stack([log_pdf(c, obs) for c in components])


def forward_log_likelihood(h, s):
    """``log P(O | h)`` with the stationary distribution as initial law."""
    s = _as_sequence(s)
    if s.dim != h.dim:
        raise DimensionError(f"sequence dimension {s.dim} != model dimension {h.dim}")
    log_b = _log_emissions(h.components, s.observations)
    with np.errstate(divide="ignore"):
        log_a = np.log(h.transition)
        log_init = np.log(h.stationary)
    return float(forward_log(log_b, log_a, log_init))


# Baum-Welch -------------------------------------------------------------


def _floor_cov(cov):
    d = cov.shape[0]
    cov = 0.5 * (cov + cov.T)
    return cov + (1e-6 * np.trace(cov) / d + 1e-10) * np.eye(d)


def _floor_transition(t):
    t = np.maximum(t, TRANSITION_FLOOR)
    return t / t.sum(axis=1, keepdims=True)


def _pooled_cov(x):
    centered = x - x.mean(axis=0)
    return _floor_cov(centered.T @ centered / len(x))


def _initialize(x, m, seed):
    d = x.shape[1]
    pooled = _pooled_cov(x)
    if m == 1:
        means = x.mean(axis=0, keepdims=True)
        covs = pooled[None]
    else:
        km = KMeans(n_clusters=m, n_init=10, random_state=derive_seed(seed, 0) % 2**32)
        labels = km.fit_predict(x)
        means = km.cluster_centers_.copy()
        covs = np.empty((m, d, d))
        for k in range(m):
            pts = x[labels == k]
            if len(pts) > d:
                c = pts - pts.mean(axis=0)
                covs[k] = _floor_cov(c.T @ c / len(pts))
            else:
                covs[k] = pooled
    rng = make_rng(seed, 1)
    trans = 0.5 / m + 0.5 * rng.dirichlet(np.ones(m), size=m)
    return means, covs, _floor_transition(trans)


def _e_step(obs_list, means, covs, trans):
    comps = [Gaussian(means[k], covs[k]) for k in range(len(means))]
    init = stationary_distribution(trans)
    total = 0.0
    gammas = []
    xi = np.zeros_like(trans)
    for obs in obs_list:
        ll, gamma, xi_seq = forward_backward(_log_emissions(comps, obs), trans, init)
        total += ll
        gammas.append(gamma)
        xi += xi_seq
    return total, gammas, xi


def _m_step(x, gammas, xi, means_old, pooled):
    gamma = np.vstack(gammas)
    weight = gamma.sum(axis=0)
    m, d = gamma.shape[1], x.shape[1]
    means = means_old.copy()
    covs = np.empty((m, d, d))
    collapsed = []
    for k in range(m):
        if weight[k] < 1e-8:
            collapsed.append(k)
            covs[k] = pooled
            continue
        means[k] = gamma[:, k] @ x / weight[k]
        c = x - means[k]
        covs[k] = _floor_cov((gamma[:, k, None] * c).T @ c / weight[k])
    rows = xi.sum(axis=1, keepdims=True)
    trans = np.where(rows > 0, xi / np.where(rows > 0, rows, 1.0), 1.0 / m)
    return means, covs, _floor_transition(trans), collapsed


def baum_welch(sequences, m, seed=0, max_iter=200, tol=1e-6):
    """Maximum-likelihood GMM-HMM by expectation-maximization.

    Parameters
    ----------
    sequences : list of Sequence or (T, d) arrays
        Training data; statistics are pooled across sequences.
    m : int
        Number of hidden states.
    seed : int
        Seeds the k-means initialization and the transition jitter.
    max_iter, tol :
        Stop after ``max_iter`` updates or once the per-observation
        log-likelihood gain drops below ``tol``.

    Returns
    -------
    GmmHmm
        ``metadata`` holds ``ll_trace`` (total log-likelihood per accepted
        iterate, nondecreasing), ``log_likelihood``, ``n_iter``, ``seed``,
        ``converged`` and ``warnings``.

    Notes
    -----
    The initial law is tied to the stationary distribution, so the
    transition update is not an exact maximizer.  Each update is therefore
    checked against the likelihood and halved toward the previous iterate
    until it does not decrease (a generalized EM step).  Transition entries
    are floored at 1e-6 to keep the chain irreducible.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    seqs = [_as_sequence(s) for s in sequences]
    if not seqs:
        raise ValueError("no training sequences")
    dims = {s.dim for s in seqs}
    if len(dims) != 1:
        raise DimensionError("training sequences have different dimensions")
    obs_list = [s.observations for s in seqs]
    x = np.vstack(obs_list)
    n_obs = len(x)
    if m > n_obs:
        raise ValueError(f"{m} states but only {n_obs} observations")

    pooled = _pooled_cov(x)
    means, covs, trans = _initialize(x, m, seed)
    ll, gammas, xi = _e_step(obs_list, means, covs, trans)
    trace = [ll]
    notes = []
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new_means, new_covs, new_trans, collapsed = _m_step(x, gammas, xi, means, pooled)
        for k in collapsed:
            msg = f"iteration {n_iter}: state {k} has no responsibility; covariance reset"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        step = 1.0
        accepted = False
        for _ in range(30):
            cand = (means + step * (new_means - means),
                    covs + step * (new_covs - covs),
                    trans + step * (new_trans - trans))
            cand_ll, cand_gammas, cand_xi = _e_step(obs_list, *cand)
            if cand_ll >= ll:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True
            break
        gain = (cand_ll - ll) / n_obs
        means, covs, trans = cand
        ll, gammas, xi = cand_ll, cand_gammas, cand_xi
        trace.append(ll)
        if gain < tol:
            converged = True
            break

    comps = tuple(Gaussian(means[k], covs[k]) for k in range(m))
    meta = {
        "seed": int(seed),
        "log_likelihood": float(ll),
        "ll_trace": [float(v) for v in trace],
        "n_iter": n_iter,
        "converged": converged,
        "warnings": notes,
    }
    return GmmHmm(trans, comps, meta)
