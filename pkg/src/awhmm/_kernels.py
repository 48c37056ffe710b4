"""Compiled inner loops for the HMM recursions."""

import numpy as np
from numba import njit


@njit(cache=True)
def _logsumexp_vec(v):
    m = v.max()
    if m == -np.inf:
        return m
    s = 0.0
    for k in range(v.size):
        s += np.exp(v[k] - m)
    return m + np.log(s)


@njit(cache=True)
def forward_log(log_b, log_a, log_init):
    """Log-domain forward pass; returns log P(O)."""
    n_steps, m = log_b.shape
    la = log_init + log_b[0]
    tmp = np.empty(m)
    nxt = np.empty(m)
    for t in range(1, n_steps):
        for j in range(m):
            for i in range(m):
                tmp[i] = la[i] + log_a[i, j]
            nxt[j] = _logsumexp_vec(tmp) + log_b[t, j]
        la[:] = nxt
    return _logsumexp_vec(la)


@njit(cache=True)
def forward_backward(log_b, a, init):
    """Scaled forward-backward.

    Returns (log-likelihood, gamma (T, M), xi summed over time (M, M)).
    Emission rows are shifted by their maximum before exponentiation so the
    scaling constants never underflow when ``a`` has no zero entries.
    """
    n_steps, m = log_b.shape
    b = np.empty((n_steps, m))
    shift = np.empty(n_steps)
    for t in range(n_steps):
        shift[t] = log_b[t].max()
        for j in range(m):
            b[t, j] = np.exp(log_b[t, j] - shift[t])
    alpha = np.empty((n_steps, m))
    c = np.empty(n_steps)
    alpha[0] = init * b[0]
    c[0] = alpha[0].sum()
    alpha[0] /= c[0]
    for t in range(1, n_steps):
        for j in range(m):
            s = 0.0
            for i in range(m):
                s += alpha[t - 1, i] * a[i, j]
            alpha[t, j] = s * b[t, j]
        c[t] = alpha[t].sum()
        alpha[t] /= c[t]
    loglik = 0.0
    for t in range(n_steps):
        loglik += np.log(c[t]) + shift[t]
    beta = np.ones((n_steps, m))
    for t in range(n_steps - 2, -1, -1):
        for i in range(m):
            s = 0.0
            for j in range(m):
                s += a[i, j] * b[t + 1, j] * beta[t + 1, j]
            beta[t, i] = s / c[t + 1]
    gamma = alpha * beta
    for t in range(n_steps):
        gamma[t] /= gamma[t].sum()
    xi = np.zeros((m, m))
    for t in range(n_steps - 1):
        for i in range(m):
            for j in range(m):
                xi[i, j] += alpha[t, i] * a[i, j] * b[t + 1, j] * beta[t + 1, j] / c[t + 1]
    return loglik, gamma, xi


@njit(cache=True)
def sinkhorn_scaling(kernel, mu, nu, u, v, max_steps, check_every, start, tol, absorb):
    """Plain Sinkhorn scalings on a fixed kernel, updating ``u, v`` in place.

    Stops at the first residual check at or below ``tol`` (status 0), when a
    scaling leaves ``[1/absorb, absorb]`` on the support (status 1), when
    ``max_steps`` are used up (status 2), or on a non-finite value (status 3).
    ``start`` is the global step count, so checks stay on a fixed cadence.
    Returns ``(status, steps, residual)``.
    """
    m, n = mu.size, nu.size
    residual = np.inf
    for step in range(1, max_steps + 1):
        kv = np.dot(kernel, v)
        for i in range(m):
            u[i] = mu[i] / kv[i] if kv[i] > 0 else 0.0
        ku = np.dot(u, kernel)
        for j in range(n):
            v[j] = nu[j] / ku[j] if ku[j] > 0 else 0.0
        for i in range(m):
            x = u[i]
            if not np.isfinite(x):
                return 3, step, residual
            if mu[i] > 0 and not (1.0 / absorb <= x <= absorb):
                return 1, step, residual
        for j in range(n):
            x = v[j]
            if not np.isfinite(x):
                return 3, step, residual
            if nu[j] > 0 and not (1.0 / absorb <= x <= absorb):
                return 1, step, residual
        if (start + step) % check_every == 0:
            # columns are exact right after the v-update
            kv = np.dot(kernel, v)
            residual = 0.0
            for i in range(m):
                residual = max(residual, abs(u[i] * kv[i] - mu[i]))
            if residual <= tol:
                return 0, step, residual
    return 2, max_steps, residual


@njit(cache=True)
def sample_chain(cum_init, cum_trans, u):
    """Markov chain path by inverse-CDF lookups on uniforms ``u``."""
    m = cum_init.size
    states = np.empty(u.size, dtype=np.int64)
    s = min(np.searchsorted(cum_init, u[0], side="right"), m - 1)
    states[0] = s
    for t in range(1, u.size):
        s = min(np.searchsorted(cum_trans[s], u[t], side="right"), m - 1)
        states[t] = s
    return states
