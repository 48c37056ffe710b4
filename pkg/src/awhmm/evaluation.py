"""Distance matrices, retrieval precision-recall, 1-NN accuracy and alpha tuning."""

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._rng import DEFAULT_SEED, derive_seed
from .distance import combine, iaw, kl_hmm_mc, maw
from .errors import DimensionError

METHODS = ("MAW", "IAW", "KL")
DEFAULT_ALPHA_GRID = tuple(round(0.1 * k, 1) for k in range(11))
THREADS_ENV = "AWHMM_THREADS"


@dataclass
class DistanceMatrix:
    """Symmetric matrix of pairwise distances plus provenance.

    For MAW and IAW the two sub-terms are kept so the matrix can be
    recombined at any alpha without recomputing registrations.
    """

    values: np.ndarray
    labels: np.ndarray | None
    method: str
    params: dict = field(default_factory=dict)
    marginal: np.ndarray | None = None
    transition: np.ndarray | None = None
    wall_times: np.ndarray | None = None
    names: list | None = None

    @property
    def size(self):
        return self.values.shape[0]

    def at_alpha(self, alpha):
        """Same pairs, recombined at another alpha."""
        if self.marginal is None or self.transition is None:
            raise ValueError(f"{self.method} distances have no alpha decomposition")
        values = combine(self.marginal, self.transition, alpha)
        params = dict(self.params, alpha=float(alpha))
        return DistanceMatrix(values, self.labels, self.method, params,
                              self.marginal, self.transition, self.wall_times, self.names)


def _thread_count(n_jobs):
    if n_jobs is None:
        n_jobs = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, int(n_jobs))


def _normalize_method(method):
    key = method.upper().replace("-MC", "")
    if key not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    return key


def _pair_distance(method, a, b, params, seed):
    if method == "MAW":
        return maw(a, b, p=params.get("p", 1.0), alpha=params.get("alpha", 0.5))
    if method == "IAW":
        return iaw(a, b, p=params.get("p", 1.0), alpha=params.get("alpha", 0.5),
                   n=params.get("n", 1000), seed=seed,
                   sinkhorn_params=params.get("sinkhorn_params"))
    return kl_hmm_mc(a, b, length=params.get("length", 1000), seed=seed,
                     symmetrize=params.get("symmetrize", True))


def pairwise_distance_matrix(models, labels=None, method="MAW", params=None,
                             base_seed=DEFAULT_SEED, n_jobs=None, keys=None):
    """Evaluate one distance on every unordered pair of models.

    Parameters
    ----------
    models : list of GmmHmm
    labels : sequence, optional
        Class label per model (needed later for retrieval scores).
    method : {"MAW", "IAW", "KL"}
    params : dict, optional
        ``p``, ``alpha`` (MAW/IAW), ``n`` and ``sinkhorn_params`` (IAW),
        ``length`` and ``symmetrize`` (KL).
    base_seed : int
        Pair ``(i, j)`` uses ``derive_seed(base_seed, ki, kj)`` where ``ki <
        kj`` are the items' keys, so the result does not depend on the
        evaluation order.
    n_jobs : int, optional
        Worker threads; defaults to the ``AWHMM_THREADS`` environment
        variable, else 1.  Output is identical for any thread count.
    keys : sequence of int, optional
        Stable integer identity per model (default: list position).  Passing
        the keys along with a reordered model list reproduces the same
        matrix, reordered.
    """
    method = _normalize_method(method)
    params = dict(params or {})
    n = len(models)
    if n < 2:
        raise ValueError("need at least two models")
    if len({h.dim for h in models}) != 1:
        raise DimensionError("models have different observation dimensions")
    keys = list(range(n)) if keys is None else [int(k) for k in keys]
    if len(keys) != n or len(set(keys)) != n:
        raise ValueError("keys must be unique, one per model")
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise ValueError("one label per model is required")

    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    values = np.zeros((n, n))
    marginal = np.zeros((n, n)) if method != "KL" else None
    transition = np.zeros((n, n)) if method != "KL" else None
    times = np.zeros((n, n))

    def run(pair):
        i, j = pair
        a, b = (i, j) if keys[i] < keys[j] else (j, i)
        seed = derive_seed(base_seed, keys[a], keys[b])
        try:
            return pair, _pair_distance(method, models[a], models[b], params, seed)
        except Exception as exc:
            raise type(exc)(f"pair ({i}, {j}): {exc}") from exc

    workers = _thread_count(n_jobs)
    if workers == 1:
        results = map(run, pairs)
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        results = pool.map(run, pairs)
    try:
        for (i, j), rep in results:
            values[i, j] = values[j, i] = rep.value
            times[i, j] = times[j, i] = rep.wall_time
            if marginal is not None:
                marginal[i, j] = marginal[j, i] = rep.marginal_term
                transition[i, j] = transition[j, i] = rep.transition_term
    finally:
        if workers > 1:
            pool.shutdown()
    params.setdefault("base_seed", int(base_seed))
    return DistanceMatrix(values, labels, method, params, marginal, transition, times)


@dataclass
class PrCurve:
    recall: np.ndarray
    precision: np.ndarray
    per_query: list
    skipped: list = field(default_factory=list)

    @property
    def mean_average_precision(self):
        return float(np.mean([q.mean() for q in self.per_query]))


def _ranking(row, q):
    order = np.lexsort((np.arange(row.size), row))
    return order[order != q]


def _check_labels(dm):
    if dm.labels is None:
        raise ValueError("distance matrix has no labels")
    return np.asarray(dm.labels)


def precision_recall(dm):
    """Retrieval precision at every relevant hit, averaged over queries.

    Each item queries all others ranked by increasing distance (ties by
    index).  For a query with ``R`` same-class items, precision is recorded
    at recall ``k/R`` for ``k = 1..R``.  Queries whose class has no other
    member are skipped with a warning.  When classes differ in size, each
    query's curve is read at the union of recall levels by taking the
    precision at the first recall point at or beyond that level.
    """
    labels = _check_labels(dm)
    per_query, recalls, skipped = [], [], []
    for q in range(dm.size):
        ranked = _ranking(dm.values[q], q)
        hits = labels[ranked] == labels[q]
        r = int(hits.sum())
        if r == 0:
            skipped.append(q)
            warnings.warn(f"query {q} has no relevant items; skipped", RuntimeWarning, stacklevel=2)
            continue
        ranks = np.flatnonzero(hits) + 1
        per_query.append(np.arange(1, r + 1) / ranks)
        recalls.append(np.arange(1, r + 1) / r)
    if not per_query:
        raise ValueError("no query has a relevant item")
    grid = np.unique(np.concatenate(recalls))
    curves = []
    for rec, prec in zip(recalls, per_query):
        idx = np.searchsorted(rec, grid - 1e-12)
        curves.append(prec[np.minimum(idx, rec.size - 1)])
    return PrCurve(grid, np.mean(curves, axis=0), per_query, skipped)


def mean_average_precision(dm):
    return precision_recall(dm).mean_average_precision


def knn1_accuracy(dm):
    """Leave-one-out 1-nearest-neighbour accuracy (ties to the lower index)."""
    labels = _check_labels(dm)
    correct = 0
    for q in range(dm.size):
        nearest = _ranking(dm.values[q], q)[0]
        correct += labels[nearest] == labels[q]
    return correct / dm.size


def select_alpha(models, labels, method="MAW", grid=None, params=None,
                 base_seed=DEFAULT_SEED, n_jobs=None, dm=None):
    """Pick alpha by leave-one-out 1-NN accuracy on a training set.

    The distance matrix is computed once; each alpha recombines the cached
    marginal and transition terms.  Returns ``(alpha, table)`` where
    ``table`` lists ``(alpha, accuracy)``; ties go to the smallest alpha.
    """
    grid = DEFAULT_ALPHA_GRID if grid is None else tuple(float(a) for a in grid)
    if not grid or any(not 0.0 <= a <= 1.0 for a in grid):
        raise ValueError("alpha grid must be nonempty with values in [0, 1]")
    if dm is None:
        dm = pairwise_distance_matrix(models, labels, method, params, base_seed, n_jobs)
    elif dm.labels is None:
        dm.labels = np.asarray(labels)
    table = [(a, knn1_accuracy(dm.at_alpha(a))) for a in sorted(grid)]
    best_alpha, best_acc = table[0]
    for a, acc in table[1:]:
        if acc > best_acc:
            best_alpha, best_acc = a, acc
    return best_alpha, table

