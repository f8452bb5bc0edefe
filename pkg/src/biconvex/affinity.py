"""k-nearest-neighbour Gaussian kernel affinities.

Two flavours are used by the solver: the initial affinities computed in the
Euclidean geometry of the data, and adaptive affinities recomputed in the
feature space induced by the learned weights.
"""
from __future__ import annotations

import csv

import numpy as np
from scipy.spatial.distance import cdist

from .model import AffinityGraph, norm_coefficients

_TINY = np.finfo(float).tiny


def pairwise_sq_distances(X, w=None, lam=0.0, Y=None):
    """Squared distances between rows of ``X`` (and ``Y``, default ``X``).

    Euclidean without weights, the induced norm ``sum_l (w_l^2 + lam w_l) d_l^2``
    with them.
    """
    X = np.asarray(X, dtype=float)
    Y = X if Y is None else np.asarray(Y, dtype=float)
    if w is None:
        return cdist(X, Y, "sqeuclidean")
    coef = norm_coefficients(w, lam)
    if coef.shape != (X.shape[1],):
        raise ValueError(f"dimension mismatch: {X.shape[1]} features but {coef.shape[0]} weights")
    # zero-coefficient features contribute exactly nothing
    keep = coef > 0
    if not keep.any():
        return np.zeros((X.shape[0], Y.shape[0]))
    return cdist(X[:, keep], Y[:, keep], "sqeuclidean", w=coef[keep])


def _check_k(n, k):
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")


def _rank_candidates(rows, cols, d2, n, k):
    # order by (row, distance, column index) and keep the first k per row
    order = np.lexsort((cols, d2, rows))
    rows, cols, d2 = rows[order], cols[order], d2[order]
    starts = np.searchsorted(rows, np.arange(n))
    rank = np.arange(rows.size) - starts[rows]
    keep = rank < k
    return cols[keep].reshape(n, k), d2[keep].reshape(n, k)


def _knn(X, k, w=None, lam=0.0):
    """Exact k nearest neighbours and their squared distances.

    A Gram-matrix screen proposes candidates within a rounding margin of the
    k-th smallest distance; candidate distances are then recomputed exactly
    from coordinate differences and ranked with ties broken by index.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    _check_k(n, k)
    coef = np.ones(p) if w is None else norm_coefficients(w, lam)
    if coef.shape != (p,):
        raise ValueError(f"dimension mismatch: {p} features but {coef.shape[0]} weights")
    keep = coef > 0
    Xk, ck = X[:, keep], coef[keep]
    Z = Xk * np.sqrt(ck)
    sq = np.einsum("ij,ij->i", Z, Z)
    if k == n - 1 or not keep.any() or not np.all(np.isfinite(sq)):
        d2 = pairwise_sq_distances(X, w, lam)
        np.fill_diagonal(d2, np.inf)
        rows, cols = np.nonzero(~np.eye(n, dtype=bool))
        return _rank_candidates(rows, cols, d2[rows, cols], n, k)
    approx = sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T)
    np.fill_diagonal(approx, np.inf)
    kth = np.partition(approx, k - 1, axis=1)[:, k - 1]
    margin = 1e-9 * (sq + sq.max()) + 1e-300
    rows, cols = np.nonzero(approx <= (kth + 2.0 * margin)[:, None])
    off = rows != cols
    rows, cols = rows[off], cols[off]
    diff = Xk[rows] - Xk[cols]
    d2 = np.einsum("ij,ij,j->i", diff, diff, ck)
    return _rank_candidates(rows, cols, d2, n, k)


def knn_indices(X, k, w=None, lam=0.0):
    """Indices of the ``k`` nearest neighbours of every row.

    Parameters
    ----------
    X : ndarray of shape (n, p)
    k : int
        Number of neighbours, ``1 <= k <= n - 1``.
    w : ndarray of shape (p,), optional
        Feature weights. When given, distances use the induced norm with
        coefficients ``w**2 + lam * w``; otherwise plain Euclidean distance.
    lam : float

    Returns
    -------
    ndarray of shape (n, k)
        Neighbour indices sorted by distance, ties broken by ascending index.
    """
    return _knn(X, k, w, lam)[0]


def compute_affinities(X, k, w=None, lam=0.0, scale=1.0):
    """k-NN masked Gaussian kernel ``phi_ij = exp(-d^2(i, j) / scale)``."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    nbrs, d2 = _knn(X, k, w, lam)
    n = nbrs.shape[0]
    rows = np.repeat(np.arange(n), k)
    # keep far neighbours as (tiny) edges rather than letting exp underflow to 0
    vals = np.maximum(np.exp(-d2.ravel() / scale), _TINY)
    return AffinityGraph.from_edges(rows, nbrs.ravel(), vals, n)


def initial_affinities(X, k, bandwidth=1.0):
    """Euclidean-space affinities used before the first iteration."""
    return compute_affinities(X, k, scale=bandwidth)


def adaptive_affinities(X, k, w, lam):
    """Affinities in the learned feature space; distances are divided by ``p``."""
    X = np.asarray(X, dtype=float)
    return compute_affinities(X, k, w=w, lam=lam, scale=X.shape[1])


def write_affinities_csv(graph, path):
    """Write ``(i, j, phi_ij)`` triplets with a header row."""
    rows, cols, vals = graph.edges()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "phi"])
        for i, j, v in zip(rows, cols, vals):
            writer.writerow([int(i), int(j), repr(float(v))])


def read_affinities_csv(path, n):
    rows, cols, vals = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for rec in reader:
            rows.append(int(rec[0]))
            cols.append(int(rec[1]))
            vals.append(float(rec[2]))
    return AffinityGraph.from_edges(rows, cols, vals, n)
