"""Core types, the weighted norm and the biconvex clustering objective."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

#: Affinity update cadence value meaning "never recompute affinities".
NEVER = 0


class NumericalError(ArithmeticError):
    """Raised when the objective stops being finite during a fit."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


def soft_threshold(x, y):
    """Soft-thresholding operator ``S(x, y)``.

    Shrinks ``x`` toward zero by ``y`` and returns zero inside the dead zone
    ``|x| < y``. Works elementwise on arrays.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.asarray(y) < 0):
        raise ValueError("threshold must be nonnegative")
    out = np.sign(x) * np.maximum(np.abs(x) - y, 0.0)
    return out[()] if out.ndim == 0 else out


def norm_coefficients(w, lam):
    """Per-feature coefficients ``w_l**2 + lam * w_l`` of the induced norm."""
    w = np.asarray(w, dtype=float)
    return w * w + lam * w


def weighted_norm_sq(y, w, lam=0.0):
    """Squared norm induced by the feature weights.

    Parameters
    ----------
    y : array-like of shape (p,)
    w : array-like of shape (p,)
        Feature weights.
    lam : float
        Sparsity strength.

    Returns
    -------
    float
        ``sum_l (w_l**2 + lam * w_l) * y_l**2``.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.shape != w.shape:
        raise ValueError(f"dimension mismatch: y has shape {y.shape}, w has shape {w.shape}")
    return float(np.sum(norm_coefficients(w, lam) * y * y))


@dataclass(frozen=True, eq=False)
class AffinityGraph:
    """Sparse directed pairwise affinities ``phi_ij`` over ordered pairs ``i != j``.

    ``matrix[i, j]`` holds ``phi_ij``. Row ``i`` lists the neighbours of ``i``;
    the graph is not required to be symmetric.
    """

    matrix: sp.csr_matrix

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise ValueError("affinity matrix must be square")
        m.sort_indices()
        if m.nnz and (np.any(m.data < 0) or not np.all(np.isfinite(m.data))):
            raise ValueError("affinities must be finite and nonnegative")
        if np.any(m.diagonal() != 0):
            raise ValueError("affinity graph must not contain self-loops")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_edges(cls, rows, cols, values, n):
        return cls(sp.csr_matrix((values, (rows, cols)), shape=(n, n)))

    @classmethod
    def from_dense(cls, phi):
        phi = np.array(phi, dtype=float)
        np.fill_diagonal(phi, 0.0)
        return cls(sp.csr_matrix(phi))

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def n_edges(self):
        return self.matrix.nnz

    def edges(self):
        """Return ``(rows, cols, values)`` of the stored entries."""
        coo = self.matrix.tocoo()
        return coo.row.astype(np.intp), coo.col.astype(np.intp), coo.data.copy()

    def coupling(self):
        """Symmetric coupling ``Phi + Phi^T`` used by the centroid update."""
        s = (self.matrix + self.matrix.T).tocsr()
        s.sum_duplicates()
        s.sort_indices()
        return s

    def toarray(self):
        return self.matrix.toarray()

    def fusion_penalty(self, mu):
        """``sum_{i != j} phi_ij * ||mu_i - mu_j||_2**2``."""
        rows, cols, vals = self.edges()
        if vals.size == 0:
            return 0.0
        diff = mu[rows] - mu[cols]
        return float(np.dot(vals, np.einsum("ij,ij->i", diff, diff)))


@dataclass(frozen=True)
class Hyperparameters:
    """Configuration of a biconvex clustering fit.

    ``affinity_update`` is the Step-4 cadence: ``0`` never recomputes the
    affinities, ``m >= 1`` recomputes them after every ``m``-th iteration.
    ``update_weights=False`` freezes the feature weights at their initial
    value (uniform by default), which gives the ridge-fusion convex clustering
    baseline when combined with ``lam=0``.
    """

    gamma: float = 100.0
    lam: float = 0.2
    n_neighbors: int = 5
    bandwidth: float = 1.0
    max_iter: int = 500
    tol: float = 1e-6
    affinity_update: int = NEVER
    inner_sweeps: int = 1
    update_weights: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError(f"gamma must be a finite nonnegative number, got {self.gamma}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lam must be a finite nonnegative number, got {self.lam}")
        if int(self.n_neighbors) != self.n_neighbors or self.n_neighbors < 1:
            raise ValueError(f"n_neighbors must be a positive integer, got {self.n_neighbors}")
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter}")
        if not self.tol >= 0:
            raise ValueError(f"tol must be nonnegative, got {self.tol}")
        if int(self.affinity_update) != self.affinity_update or self.affinity_update < 0:
            raise ValueError(f"affinity_update must be a nonnegative integer, got {self.affinity_update}")
        if int(self.inner_sweeps) != self.inner_sweeps or self.inner_sweeps < 1:
            raise ValueError(f"inner_sweeps must be a positive integer, got {self.inner_sweeps}")


@dataclass
class FitResult:
    """Output of one block coordinate descent run.

    ``objective_trace[t]`` is the objective after iteration ``t + 1`` (Steps
    1 to 3), evaluated with the affinities in force during that iteration.
    ``affinity_updates`` lists the iterations after which Step 4 replaced the
    affinities; the trace is nonincreasing between consecutive entries.
    """

    centroids: np.ndarray
    weights: np.ndarray
    affinity: AffinityGraph
    objective_trace: np.ndarray
    n_iter: int
    converged: bool
    n_degenerate: int = 0
    affinity_updates: list = field(default_factory=list)

    @property
    def objective(self):
        return float(self.objective_trace[-1]) if len(self.objective_trace) else float("nan")


def objective_value(X, mu, w, affinity, gamma, lam, observed=None):
    """Biconvex clustering objective with squared (ridge) fusion.

    ``sum_il w_l^2 (x_il - mu_il)^2 + gamma * sum_{i != j} phi_ij ||mu_i - mu_j||^2
    + lam * sum_l w_l sum_i (x_il - mu_il)^2``

    If ``observed`` (boolean, same shape as ``X``) is given, only observed
    cells enter the fit terms.
    """
    X = np.asarray(X, dtype=float)
    mu = np.asarray(mu, dtype=float)
    w = np.asarray(w, dtype=float)
    if X.shape != mu.shape:
        raise ValueError(f"dimension mismatch: X {X.shape} vs centroids {mu.shape}")
    if w.shape != (X.shape[1],):
        raise ValueError(f"dimension mismatch: {X.shape[1]} features but {w.shape[0]} weights")
    if affinity.n != X.shape[0]:
        raise ValueError(f"affinity graph has {affinity.n} nodes for {X.shape[0]} samples")
    resid = X - mu
    if observed is not None:
        resid = np.where(observed, resid, 0.0)
    col_sq = np.sum(resid * resid, axis=0)
    fit = float(np.dot(w * w, col_sq)) + lam * float(np.dot(w, col_sq))
    return fit + gamma * affinity.fusion_penalty(mu)
