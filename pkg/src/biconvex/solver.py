"""Block coordinate descent for biconvex clustering.

One outer iteration performs

1. Gauss-Seidel sweeps over the centroid cells (exact coordinate minimisation
   of the centroid subproblem),
2. a root find for the simplex multiplier ``alpha``,
3. the closed-form soft-thresholded weight update, and optionally
4. a recomputation of the k-NN affinities in the learned feature space.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numba
import numpy as np

from .affinity import adaptive_affinities, initial_affinities
from .model import (
    AffinityGraph,
    FitResult,
    Hyperparameters,
    NumericalError,
    norm_coefficients,
    objective_value,
)

logger = logging.getLogger(__name__)

#: Lower clamp on column residuals; avoids division by zero for perfectly fitted columns.
EPS_D = 1e-12
_MAX_BISECT = 400


@numba.njit(cache=True, nogil=True)
def _gauss_seidel(mu, X, coef, indptr, indices, data, gamma):
    n, p = mu.shape
    n_degenerate = 0
    for i in range(n):
        start = indptr[i]
        stop = indptr[i + 1]
        deg = 0.0
        for k in range(start, stop):
            deg += data[k]
        deg *= gamma
        for l in range(p):
            s = 0.0
            for k in range(start, stop):
                s += data[k] * mu[indices[k], l]
            c = coef[i, l]
            den = deg + c
            if den > 0.0:
                mu[i, l] = (gamma * s + c * X[i, l]) / den
            else:
                n_degenerate += 1
    return n_degenerate


def _cell_coefficients(w, lam, shape, observed):
    coef = np.broadcast_to(norm_coefficients(w, lam), shape)
    if observed is None:
        return coef
    return np.where(observed, coef, 0.0)


def _as_csr_arrays(coupling):
    return (coupling.indptr.astype(np.int64, copy=False),
            coupling.indices.astype(np.int64, copy=False),
            coupling.data.astype(np.float64, copy=False))


def update_centroids_sweep(X, mu, w, affinity, gamma, lam, observed=None, *, _coupling=None):
    """Run one in-place Gauss-Seidel sweep of the centroid update.

    Rows are visited in ascending order and each cell ``(i, l)`` is set to the
    exact minimiser of the objective in that cell given all other cells,
    using the freshest values of the other rows. Columns are independent.

    Parameters
    ----------
    X : ndarray of shape (n, p)
    mu : ndarray of shape (n, p), float64, C-contiguous
        Centroids, modified in place.
    w : ndarray of shape (p,)
    affinity : AffinityGraph
    gamma, lam : float
    observed : ndarray of bool, shape (n, p), optional
        Cells outside the mask contribute no data term.

    Returns
    -------
    int
        Number of degenerate cells (zero denominator) left unchanged.
    """
    if mu.dtype != np.float64 or not mu.flags.c_contiguous:
        raise ValueError("centroids must be a C-contiguous float64 array")
    if mu.shape != np.shape(X):
        raise ValueError(f"dimension mismatch: X {np.shape(X)} vs centroids {mu.shape}")
    coupling = affinity.coupling() if _coupling is None else _coupling
    coef = _cell_coefficients(w, lam, mu.shape, observed)
    X = np.asarray(X, dtype=np.float64)
    return int(_gauss_seidel(mu, X, coef, *_as_csr_arrays(coupling), float(gamma)))


def column_residuals(X, mu, observed=None):
    """``D_l = max(sum_i (x_il - mu_il)^2, EPS_D)`` over observed cells."""
    resid = np.asarray(X, dtype=float) - np.asarray(mu, dtype=float)
    if observed is not None:
        resid = np.where(observed, resid, 0.0)
    return np.maximum(np.sum(resid * resid, axis=0), EPS_D)


@dataclass(frozen=True)
class AlphaSolve:
    alpha_star: float
    residual: float
    iterations: int


def _alpha_residual(alpha, D, lam):
    return float(np.sum(np.maximum(alpha / D - lam, 0.0))) - 2.0


def solve_alpha(D, lam):
    """Bisection for ``alpha`` solving ``sum_l S(alpha / D_l, lam) = 2``.

    The map is nondecreasing and piecewise linear in ``alpha``; the search
    starts from the bracket ``[0, (2 + p * lam) * max(D)]`` and stops once
    ``|residual| <= 1e-10 * (2 + p * lam)``.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 1 or D.size == 0 or np.any(D <= 0):
        raise ValueError("column residuals must be a nonempty positive vector")
    p = D.size
    tol = 1e-10 * (2.0 + p * lam)
    lo, hi = 0.0, (2.0 + p * lam) * float(D.max())
    f_hi = _alpha_residual(hi, D, lam)
    # the root sits on the upper end when every D_l equals max(D)
    assert f_hi >= -tol, "bisection bracket does not contain the root"
    best, f_best = hi, f_hi
    it = 0
    while it < _MAX_BISECT:
        it += 1
        mid = 0.5 * (lo + hi)
        f_mid = _alpha_residual(mid, D, lam)
        if abs(f_mid) < abs(f_best):
            best, f_best = mid, f_mid
        if abs(f_mid) <= tol or mid <= lo or mid >= hi:
            break
        if f_mid < 0.0:
            lo = mid
        else:
            hi = mid
    return AlphaSolve(best, f_best, it)


def solve_alpha_sorted(D, lam):
    """Exact ``alpha`` by scanning the active set in order of ``lam * D_l``.

    Feature ``l`` is active when ``alpha > lam * D_l``. With the ``m`` smallest
    thresholds active the root is ``(2 + m * lam) / sum_{active} 1 / D_l``;
    the first ``m`` whose root does not exceed the next threshold wins.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 1 or D.size == 0 or np.any(D <= 0):
        raise ValueError("column residuals must be a nonempty positive vector")
    order = np.argsort(D, kind="stable")
    d_sorted = D[order]
    inv_cum = np.cumsum(1.0 / d_sorted)
    p = D.size
    alpha = None
    for m in range(1, p + 1):
        alpha = (2.0 + m * lam) / inv_cum[m - 1]
        if m == p or alpha <= lam * d_sorted[m]:
            break
    return AlphaSolve(float(alpha), _alpha_residual(alpha, D, lam), 0)


def weights_from_alpha(alpha, D, lam):
    return 0.5 * np.maximum(alpha / D - lam, 0.0)


def update_weights(X, mu, lam, observed=None):
    """Closed-form minimiser of the objective over the simplex in ``w``."""
    D = column_residuals(X, mu, observed)
    return weights_from_alpha(solve_alpha(D, lam).alpha_star, D, lam)


def _validate_inputs(X, observed):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2D data matrix, got {X.ndim} dimensions")
    if X.shape[0] < 2 or X.shape[1] < 1:
        raise ValueError(f"need at least 2 samples and 1 feature, got shape {X.shape}")
    if observed is not None:
        observed = np.asarray(observed, dtype=bool)
        if observed.shape != X.shape:
            raise ValueError("observation mask must have the shape of X")
        if not observed.any(axis=0).all():
            raise ValueError("every column needs at least one observed cell")
        fill = np.nanmean(np.where(observed, X, np.nan), axis=0)
        X = np.where(observed, X, fill)
    if not np.all(np.isfinite(X)):
        raise ValueError("data matrix contains non-finite values")
    return np.ascontiguousarray(X), observed


def _initial_weights(w_init, p):
    if w_init is None:
        return np.full(p, 1.0 / p)
    w = np.array(w_init, dtype=float)
    if w.shape != (p,) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("initial weights must be a nonnegative length-p vector with positive sum")
    return w / w.sum()


def fit(X, config=None, affinity=None, *, w_init=None, mu_init=None, observed=None):
    """Fit biconvex clustering by block coordinate descent.

    Parameters
    ----------
    X : array-like of shape (n, p)
    config : Hyperparameters, optional
    affinity : AffinityGraph, optional
        Initial affinities. Computed from ``X`` with the Euclidean k-NN
        Gaussian kernel when omitted.
    w_init : array-like of shape (p,), optional
        Initial feature weights (normalised to the simplex). Uniform by default.
    mu_init : array-like of shape (n, p), optional
        Initial centroids. ``X`` by default.
    observed : ndarray of bool, shape (n, p), optional
        Cells outside the mask are treated as missing: they enter neither the
        fit term, the column residuals, nor the affinity distances (where they
        are replaced by the observed column mean).

    Returns
    -------
    FitResult
    """
    config = Hyperparameters() if config is None else config
    X, observed = _validate_inputs(X, observed)
    n, p = X.shape
    k = min(config.n_neighbors, n - 1)
    gamma, lam = config.gamma, config.lam

    if affinity is None:
        affinity = initial_affinities(X, k, config.bandwidth)
    elif affinity.n != n:
        raise ValueError(f"affinity graph has {affinity.n} nodes for {n} samples")
    mu = X.copy() if mu_init is None else np.array(mu_init, dtype=np.float64, order="C")
    if mu.shape != X.shape:
        raise ValueError(f"dimension mismatch: X {X.shape} vs initial centroids {mu.shape}")
    w = _initial_weights(w_init, p)

    coupling = affinity.coupling()
    reference = objective_value(X, mu, w, affinity, gamma, lam, observed)
    trace, updates = [], []
    n_degenerate = 0
    converged = False
    it = 0
    while it < config.max_iter:
        it += 1
        for _ in range(config.inner_sweeps):
            n_degenerate += update_centroids_sweep(X, mu, w, affinity, gamma, lam, observed,
                                                   _coupling=coupling)
        if config.update_weights:
            w = update_weights(X, mu, lam, observed)
        g = objective_value(X, mu, w, affinity, gamma, lam, observed)
        if not np.isfinite(g):
            raise NumericalError(f"objective became non-finite at iteration {it}", iteration=it)
        trace.append(g)
        # compare against the previous value computed under the same affinities;
        # with updates enabled, the first update always happens
        may_stop = not config.affinity_update or updates
        if may_stop and abs(reference - g) <= config.tol * (1.0 + abs(reference)):
            converged = True
            break
        reference = g
        if config.affinity_update and it % config.affinity_update == 0:
            affinity = adaptive_affinities(X, k, w, lam)
            coupling = affinity.coupling()
            updates.append(it)
            reference = objective_value(X, mu, w, affinity, gamma, lam, observed)

    if n_degenerate:
        logger.info("%d degenerate centroid cells were left unchanged", n_degenerate)
    return FitResult(mu, w, affinity, np.asarray(trace), it, converged, n_degenerate, updates)


def solution_path(X, config, gammas, affinity=None):
    """Fit along an ascending grid of ``gamma`` values with warm starts.

    Each fit starts from the centroids and weights of the previous one. All
    fits start from the same initial affinities.
    """
    gammas = [float(g) for g in gammas]
    if not gammas:
        raise ValueError("gamma grid must be nonempty")
    if any(g < 0 for g in gammas) or any(b <= a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gamma grid must be nonnegative and strictly ascending")
    X = np.asarray(X, dtype=float)
    if affinity is None:
        affinity = initial_affinities(X, min(config.n_neighbors, X.shape[0] - 1), config.bandwidth)
    results = []
    mu0 = w0 = None
    for g in gammas:
        res = fit(X, replace(config, gamma=g), affinity, w_init=w0, mu_init=mu0)
        results.append(res)
        mu0, w0 = res.centroids, res.weights
    return results
