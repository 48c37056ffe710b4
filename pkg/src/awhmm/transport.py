"""Discrete optimal transport solvers.

Two solvers with the same output type:

* :func:`solve_exact_transport` -- primal network simplex on the bipartite
  transportation graph.  Intended for the small (about 10 x 10) state
  registration problems, where an exact vertex solution is cheap.
* :func:`sinkhorn` -- entropic regularization solved by Sinkhorn scaling with
  log-domain stabilization and epsilon-scaling, for the n x n sample
  couplings.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from ._kernels import sinkhorn_scaling
from .errors import InfeasibleTransportError, NumericalError

MASS_TOL = 1e-9


@dataclass
class TransportPlan:
    """A coupling between two discrete distributions.

    ``marginal_residual`` is the largest absolute deviation of the row and
    column sums of ``weights`` from the requested marginals.
    """

    weights: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    objective: float
    marginal_residual: float
    converged: bool = True
    n_iter: int = 0
    epsilon: float = 0.0


def _marginal_residual(plan, mu, nu):
    if plan.size == 0:
        return 0.0
    return float(max(np.max(np.abs(plan.sum(axis=1) - mu)), np.max(np.abs(plan.sum(axis=0) - nu))))


def _validate(cost, mu, nu):
    cost = np.asarray(cost, dtype=float)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    nu = np.asarray(nu, dtype=float).reshape(-1)
    if cost.ndim != 2 or cost.shape != (mu.size, nu.size):
        raise ValueError(f"cost shape {cost.shape} does not match marginals ({mu.size}, {nu.size})")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    if np.any(mu < 0) or np.any(nu < 0):
        raise InfeasibleTransportError("marginals must be nonnegative")
    if abs(mu.sum() - 1.0) > MASS_TOL or abs(nu.sum() - 1.0) > MASS_TOL:
        raise InfeasibleTransportError(
            f"marginals must each sum to 1 (got {mu.sum():.12g} and {nu.sum():.12g})"
        )
    return cost, mu, nu


_ABSORB = np.exp(50.0)


def _lse_sweep(pot, cost, eps, axis, out):
    """``logsumexp((pot - C) / eps)`` over ``axis``, using ``out`` as scratch."""
    if axis == 1:
        np.subtract(pot[None, :], cost, out=out)
    else:
        np.subtract(pot[:, None], cost, out=out)
    out /= eps
    return _lse_inplace(out, axis)


def _lse_inplace(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    a -= m
    np.exp(a, out=a)
    return np.log(np.sum(a, axis=axis)) + np.squeeze(m, axis=axis)


def _gibbs(f, g, cost, eps, out):
    """``exp((f_i + g_j - C_ij) / eps)`` written into ``out``."""
    np.subtract(f[:, None], cost, out=out)
    out += g[None, :]
    out /= eps
    return np.exp(out, out=out)


def _northwest_corner(a, b):
    m, n = a.size, b.size
    a = a.copy()
    b = b.copy()
    basis = {}
    i = j = 0
    while True:
        x = min(a[i], b[j])
        basis[(i, j)] = x
        a[i] -= x
        b[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif a[i] <= b[j]:
            i += 1
        else:
            j += 1
    return basis


def _potentials(basis, cost, m, n):
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    u = np.zeros(m)
    v = np.zeros(n)
    seen = np.zeros(m + n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if seen[nb]:
                continue
            seen[nb] = True
            if node < m:
                v[nb - m] = cost[node, nb - m] - u[node]
            else:
                u[nb] = cost[nb, node - m] - v[node - m]
            queue.append(nb)
    return u, v, adj


def _tree_path(adj, start, goal):
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def _network_simplex(cost, a, b, max_pivots):
    m, n = cost.shape
    basis = _northwest_corner(a, b)
    tol = 1e-12 * (1.0 + np.max(np.abs(cost)))
    for it in range(max_pivots):
        u, v, adj = _potentials(basis, cost, m, n)
        reduced = cost - u[:, None] - v[None, :]
        # Bland's rule: lowest-index improving cell enters
        candidates = np.flatnonzero(reduced.ravel() < -tol)
        if candidates.size == 0:
            return basis, it
        ei, ej = divmod(int(candidates[0]), n)
        # cycle: entering cell (+), then the tree path from column ej back to row ei
        path = _tree_path(adj, m + ej, ei)
        cells = []
        for k in range(len(path) - 1):
            p, q = path[k], path[k + 1]
            cells.append((q, p - m) if p >= m else (p, q - m))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(basis[c] for c in minus)
        leaving = min((c for c in minus if basis[c] <= theta), key=lambda c: c[0] * n + c[1])
        for c in minus:
            basis[c] -= theta
        for c in plus:
            basis[c] += theta
        del basis[leaving]
        basis[(ei, ej)] = theta
    raise NumericalError("network simplex did not terminate")


def solve_exact_transport(cost, mu, nu):
    """Exact minimum-cost coupling of ``mu`` and ``nu`` for ``cost``.

    Returns a vertex of the transportation polytope (at most m + n - 1
    nonzero entries).  Zero-mass rows and columns are removed before solving
    and come back as zero rows/columns.  Among several optimal vertices, the
    one returned is whichever the pivoting reaches first.
    """
    cost, mu, nu = _validate(cost, mu, nu)
    m, n = cost.shape
    rows = np.flatnonzero(mu > 0)
    cols = np.flatnonzero(nu > 0)
    a = mu[rows]
    b = nu[cols]
    b = b * (a.sum() / b.sum())
    sub = cost[np.ix_(rows, cols)]
    basis, n_iter = _network_simplex(sub, a, b, max_pivots=1000 * (sub.size + 1))
    plan = np.zeros((m, n))
    for (i, j), x in basis.items():
        plan[rows[i], cols[j]] = max(x, 0.0)
    objective = float(np.sum(plan * cost))
    return TransportPlan(
        weights=plan,
        row_marginal=mu,
        col_marginal=nu,
        objective=objective,
        marginal_residual=_marginal_residual(plan, mu, nu),
        n_iter=n_iter,
    )


@dataclass(frozen=True)
class SinkhornParams:
    """Sinkhorn settings.

    ``epsilon=None`` means ``rel_epsilon * median(cost)``.  The solve starts
    at ``2**scaling_steps`` times the target epsilon and halves it after each
    stage.
    """

    epsilon: float | None = None
    rel_epsilon: float = 0.05
    tol: float = 1e-6
    max_iter: int = 10000
    scaling_steps: int = 3
    check_every: int = 10

    def target_epsilon(self, cost):
        if self.epsilon is not None:
            if not self.epsilon > 0:
                raise ValueError("epsilon must be positive")
            return float(self.epsilon)
        med = float(np.median(cost))
        if med <= 0:
            med = float(np.mean(cost))
        if med <= 0:
            med = 1.0
        return self.rel_epsilon * med


def sinkhorn(cost, mu, nu, epsilon=None, tol=1e-6, max_iter=10000, params=None):
    """Entropic OT plan by stabilized Sinkhorn iterations.

    Dual potentials ``f, g`` are kept in the log domain; between absorptions
    the usual multiplicative scalings run on the stabilized kernel
    ``exp((f + g - C) / eps)``.  Iteration stops once the marginal residual
    is at most ``tol`` at the target epsilon, or after ``max_iter`` scaling
    steps in total, in which case ``converged`` is False.

    The reported objective is the transport cost ``<P, C>`` without the
    entropy term.
    """
    if params is None:
        params = SinkhornParams(epsilon=epsilon, tol=tol, max_iter=max_iter)
    cost, mu, nu = _validate(cost, mu, nu)
    eps_target = params.target_epsilon(cost)
    schedule = [eps_target * 2.0**k for k in range(params.scaling_steps, -1, -1)]
    log_mu = np.log(np.where(mu > 0, mu, 1.0))
    log_nu = np.log(np.where(nu > 0, nu, 1.0))
    f = np.zeros(mu.size)
    g = np.zeros(nu.size)
    total = 0
    residual = np.inf
    buf = np.empty_like(cost)
    for stage, eps in enumerate(schedule):
        last = stage == len(schedule) - 1
        stage_tol = params.tol if last else max(params.tol, 1e-3 / max(mu.size, nu.size))
        kernel = _gibbs(f, g, cost, eps, buf) if stage else None
        if kernel is None or not (np.all(kernel.sum(axis=1)[mu > 0] > 0)
                                  and np.all(kernel.sum(axis=0)[nu > 0] > 0)):
            # an exact log-domain sweep brings every row and column back into range
            f = eps * (log_mu - _lse_sweep(g, cost, eps, 1, buf))
            f[mu == 0] = -np.inf
            g = eps * (log_nu - _lse_sweep(f, cost, eps, 0, buf))
            g[nu == 0] = -np.inf
            kernel = _gibbs(f, g, cost, eps, buf)
        u = np.ones(mu.size)
        v = np.ones(nu.size)
        while total < params.max_iter:
            status, steps, residual = sinkhorn_scaling(
                kernel, mu, nu, u, v, params.max_iter - total, params.check_every, total,
                stage_tol, _ABSORB)
            total += steps
            if status == 3:
                raise NumericalError("NaN/inf in Sinkhorn scaling vectors")
            if status != 1:
                break
            # absorb the large scalings into the potentials and rebuild the kernel
            with np.errstate(divide="ignore"):
                f = f + eps * np.log(u)
                g = g + eps * np.log(v)
            kernel = _gibbs(f, g, cost, eps, buf)
            u = np.ones(mu.size)
            v = np.ones(nu.size)
        with np.errstate(divide="ignore"):
            f = f + eps * np.log(u)
            g = g + eps * np.log(v)
        if total >= params.max_iter:
            break
    plan = _gibbs(f, g, cost, eps, buf)
    if not np.all(np.isfinite(plan)):
        raise NumericalError("Sinkhorn produced a non-finite plan")
    residual = _marginal_residual(plan, mu, nu)
    return TransportPlan(
        weights=plan,
        row_marginal=mu,
        col_marginal=nu,
        objective=float(np.vdot(plan, cost)),
        marginal_residual=residual,
        converged=residual <= params.tol,
        n_iter=total,
        epsilon=eps,
    )
