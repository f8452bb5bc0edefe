"""Biconvex clustering: joint centroid and feature-weight learning."""
from .assign import Dendrogram, assign_clusters, average_linkage, cut_dendrogram
from .bench import adjusted_rand_index, selection_metrics, standardize
from .estimator import BiconvexClustering
from .model import AffinityGraph, FitResult, Hyperparameters, objective_value
from .solver import fit, solution_path
from .tune import fit_masked, grid_search, make_holdout_mask

__version__ = "0.1.0"

__all__ = [
    "AffinityGraph",
    "BiconvexClustering",
    "Dendrogram",
    "FitResult",
    "Hyperparameters",
    "adjusted_rand_index",
    "assign_clusters",
    "average_linkage",
    "cut_dendrogram",
    "fit",
    "fit_masked",
    "grid_search",
    "make_holdout_mask",
    "objective_value",
    "selection_metrics",
    "solution_path",
    "standardize",
]
