"""scikit-learn compatible front end."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from . import solver
from .affinity import pairwise_sq_distances
from .assign import assign_clusters
from .model import AffinityGraph, Hyperparameters, norm_coefficients


class BiconvexClustering(ClusterMixin, TransformerMixin, BaseEstimator):
    """Biconvex clustering with jointly learned feature weights.

    Centroids (one per sample) and simplex-constrained feature weights are
    fitted by block coordinate descent on a ridge-fusion clustering
    objective. Hard labels come from an average-linkage dendrogram over the
    fitted centroids, cut at its largest height gap by default.

    Parameters
    ----------
    gamma : float, default=100.0
        Fusion strength.
    lam : float, default=0.2
        Sparsity strength of the feature weights.
    n_neighbors : int, default=5
        Neighbours per sample in the affinity graph (capped at ``n - 1``).
    bandwidth : float, default=1.0
        Gaussian kernel bandwidth of the initial affinities.
    affinity_update : int, default=0
        Recompute affinities in the learned feature space every that many
        iterations; ``0`` keeps the initial affinities.
    inner_sweeps : int, default=1
        Centroid sweeps per outer iteration.
    update_weights : bool, default=True
        ``False`` keeps the weights at their initial value.
    max_iter : int, default=500
    tol : float, default=1e-6
        Relative tolerance on the objective change.
    cut : str, default="gap"
        ``"gap"``, ``"height=H"`` or ``"k=K"``.
    min_cluster_size : int, optional
        Floor for the gap cut; defaults to ``max(2, n // 50)``.
    linkage_metric : {"weighted", "euclidean"}, default="weighted"
        Metric on centroid rows used to build the dendrogram.

    Attributes
    ----------
    centroids_ : ndarray of shape (n_samples, n_features)
    weights_ : ndarray of shape (n_features,)
    affinity_ : AffinityGraph
    labels_ : ndarray of shape (n_samples,)
    dendrogram_ : Dendrogram
    objective_trace_ : ndarray
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, gamma=100.0, lam=0.2, n_neighbors=5, bandwidth=1.0, affinity_update=0,
                 inner_sweeps=1, update_weights=True, max_iter=500, tol=1e-6, cut="gap",
                 min_cluster_size=None, linkage_metric="weighted"):
        self.gamma = gamma
        self.lam = lam
        self.n_neighbors = n_neighbors
        self.bandwidth = bandwidth
        self.affinity_update = affinity_update
        self.inner_sweeps = inner_sweeps
        self.update_weights = update_weights
        self.max_iter = max_iter
        self.tol = tol
        self.cut = cut
        self.min_cluster_size = min_cluster_size
        self.linkage_metric = linkage_metric

    def get_config(self):
        return Hyperparameters(
            gamma=float(self.gamma), lam=float(self.lam), n_neighbors=int(self.n_neighbors),
            bandwidth=float(self.bandwidth), max_iter=int(self.max_iter), tol=float(self.tol),
            affinity_update=int(self.affinity_update), inner_sweeps=int(self.inner_sweeps),
            update_weights=bool(self.update_weights),
        )

    def fit(self, X, y=None, affinity=None, w_init=None):
        """Fit centroids and weights, then assign labels.

        ``affinity`` (an :class:`AffinityGraph`) overrides the initial k-NN
        affinities; ``w_init`` overrides the uniform initial weights.
        """
        X = validate_data(self, X, ensure_min_samples=2, dtype=np.float64)
        if affinity is not None and not isinstance(affinity, AffinityGraph):
            raise TypeError("affinity must be an AffinityGraph")
        result = solver.fit(X, self.get_config(), affinity, w_init=w_init)
        self.result_ = result
        self.centroids_ = result.centroids
        self.weights_ = result.weights
        self.affinity_ = result.affinity
        self.objective_trace_ = result.objective_trace
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        self.labels_, self.dendrogram_, _ = assign_clusters(
            result.centroids, result.weights, self.lam, cut=self.cut,
            min_size=self.min_cluster_size, metric=self.linkage_metric)
        return self

    def transform(self, X):
        """Map samples into the learned feature space (induced-norm coordinates)."""
        check_is_fitted(self, "weights_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return X * np.sqrt(norm_coefficients(self.weights_, self.lam))

    def predict(self, X):
        """Label of the nearest fitted centroid under the learned metric."""
        check_is_fitted(self, "labels_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        w = self.weights_ if self.linkage_metric == "weighted" else None
        d2 = pairwise_sq_distances(X, w, self.lam, Y=self.centroids_)
        return self.labels_[np.argmin(d2, axis=1)]

    def selected_features(self):
        check_is_fitted(self, "weights_")
        return np.flatnonzero(self.weights_ > 0)


def check_data(X):
    """Validate a data matrix: 2D, finite, at least two samples."""
    return check_array(X, ensure_min_samples=2, dtype=np.float64)
