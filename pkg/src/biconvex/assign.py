"""Hard cluster labels from a converged centroid matrix.

Squared fusion penalties pull centroids close together without making them
coincide exactly, so labels are read off a dendrogram built on the centroid
rows instead of from exact row equality.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .affinity import pairwise_sq_distances


@dataclass(frozen=True, eq=False)
class Dendrogram:
    """Agglomerative merge history over ``n_leaves`` leaves.

    Leaves are nodes ``0..n-1``; the ``t``-th merge creates node ``n + t``.
    ``children[t]`` holds the two merged node ids (smaller first).
    """

    children: np.ndarray
    heights: np.ndarray
    sizes: np.ndarray
    n_leaves: int

    def __post_init__(self):
        n = self.n_leaves
        if len(self.children) != n - 1 or len(self.heights) != n - 1 or len(self.sizes) != n - 1:
            raise ValueError(f"a dendrogram over {n} leaves needs exactly {n - 1} merges")
        if np.any(np.diff(self.heights) < 0):
            raise ValueError("merge heights must be nondecreasing")

    def to_linkage(self):
        """Linkage matrix ``(a, b, height, size)`` in the usual scipy layout."""
        z = np.empty((self.n_leaves - 1, 4))
        z[:, :2] = self.children
        z[:, 2] = self.heights
        z[:, 3] = self.sizes
        return z

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node_a", "node_b", "height", "size"])
            for (a, b), h, s in zip(self.children, self.heights, self.sizes):
                writer.writerow([int(a), int(b), repr(float(h)), int(s)])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))[1:]
        children = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.intp).reshape(-1, 2)
        heights = np.array([float(r[2]) for r in rows])
        sizes = np.array([int(r[3]) for r in rows], dtype=np.intp)
        return cls(children, heights, sizes, len(rows) + 1)


def centroid_distance_matrix(mu, w=None, lam=0.0):
    """Pairwise distances between centroid rows.

    Uses the norm induced by ``w`` (coefficients ``w**2 + lam * w``) when
    weights are given, Euclidean distance otherwise.
    """
    d = np.sqrt(pairwise_sq_distances(mu, w, lam))
    np.fill_diagonal(d, 0.0)
    return d


def average_linkage(dist):
    """UPGMA agglomeration of a precomputed distance matrix.

    Ties between equally close pairs go to the lexicographically smallest
    ``(node_a, node_b)``.
    """
    dist = np.array(dist, dtype=float)
    n = dist.shape[0]
    if dist.ndim != 2 or dist.shape[1] != n:
        raise ValueError("distance matrix must be square")
    if not np.all(np.isfinite(dist)):
        raise ValueError("distance matrix contains non-finite values")
    if n < 2:
        raise ValueError("need at least two points to build a dendrogram")
    d = dist.copy()
    np.fill_diagonal(d, np.inf)
    node = np.arange(n)
    size = np.ones(n)
    children = np.empty((n - 1, 2), dtype=np.intp)
    heights = np.empty(n - 1)
    sizes = np.empty(n - 1, dtype=np.intp)
    flat = d.ravel()
    for t in range(n - 1):
        pos = int(np.argmin(flat))
        h = flat[pos]
        ties = np.flatnonzero(flat == h)
        if ties.size > 2:
            ia, ib = np.divmod(ties, n)
            lo = np.minimum(node[ia], node[ib])
            hi = np.maximum(node[ia], node[ib])
            pos = int(ties[np.lexsort((hi, lo))[0]])
        a, b = divmod(pos, n)
        children[t] = sorted((node[a], node[b]))
        heights[t] = h
        merged = size[a] + size[b]
        sizes[t] = merged
        row = (size[a] * d[a] + size[b] * d[b]) / merged
        d[a, :] = row
        d[:, a] = row
        d[a, a] = np.inf
        d[b, :] = np.inf
        d[:, b] = np.inf
        node[a] = n + t
        size[a] = merged
    # UPGMA is monotone; absorb last-ulp rounding so heights stay sorted
    heights = np.maximum.accumulate(heights)
    return Dendrogram(children, heights, sizes, n)


def _labels_after(dendro, n_merges):
    n = dendro.n_leaves
    parent = np.arange(2 * n - 1)
    for t in range(n_merges):
        a, b = dendro.children[t]
        parent[a] = parent[b] = n + t
    root = np.arange(n)
    while True:
        nxt = parent[root]
        if np.array_equal(nxt, root):
            break
        root = nxt
    return relabel(root)


def relabel(labels):
    """Map arbitrary labels to contiguous ids in order of first appearance."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse.ravel()].astype(np.intp)


def default_min_size(n):
    return max(2, n // 50)


def _absorb_small_clusters(labels, dist, min_size):
    counts = np.bincount(labels)
    keep = np.flatnonzero(counts >= min_size)
    small = np.flatnonzero(counts < min_size)
    if keep.size == 0 or small.size == 0:
        return labels
    out = labels.copy()
    for c in small:
        members = labels == c
        avg = [dist[np.ix_(members, labels == s)].mean() for s in keep]
        out[members] = keep[int(np.argmin(avg))]
    return relabel(out)


def cut_dendrogram(dendro, strategy="gap", *, height=None, n_clusters=None, min_size=None,
                   dist=None):
    """Flat cluster labels from a dendrogram.

    Parameters
    ----------
    dendro : Dendrogram
    strategy : {"gap", "height", "k"}
        ``"height"`` removes every merge above ``height``. ``"k"`` keeps
        exactly ``n_clusters`` clusters. ``"gap"`` cuts at the midpoint of the
        largest gap between consecutive merge heights, then moves every
        cluster smaller than ``min_size`` into the surviving cluster with the
        smallest average distance (needs ``dist``).
    min_size : int, optional
        Defaults to ``max(2, n // 50)`` for the gap strategy.
    dist : ndarray of shape (n, n), optional
        Distance matrix the dendrogram was built from.

    Returns
    -------
    ndarray of shape (n,)
        Labels ``0..c-1`` in order of first appearance.
    """
    n = dendro.n_leaves
    if n < 1:
        raise ValueError("empty dendrogram")
    heights = dendro.heights
    if strategy == "height":
        if height is None:
            raise ValueError("height strategy needs a height")
        return _labels_after(dendro, int(np.searchsorted(heights, height, side="right")))
    if strategy == "k":
        if n_clusters is None or not 1 <= n_clusters <= n:
            raise ValueError(f"n_clusters must lie in [1, {n}], got {n_clusters}")
        return _labels_after(dendro, n - int(n_clusters))
    if strategy != "gap":
        raise ValueError(f"unknown cut strategy {strategy!r}")
    if heights.size < 2:
        return np.zeros(n, dtype=np.intp)
    t = int(np.argmax(np.diff(heights)))
    labels = _labels_after(dendro, t + 1)
    min_size = default_min_size(n) if min_size is None else int(min_size)
    if min_size > 1:
        if dist is None:
            raise ValueError("the gap strategy needs the distance matrix to absorb small clusters")
        labels = _absorb_small_clusters(labels, np.asarray(dist, dtype=float), min_size)
    return labels


def gap_cut_height(dendro):
    """Height at which the gap strategy cuts (midpoint of the largest gap)."""
    h = dendro.heights
    if h.size < 2:
        return float(h[-1]) if h.size else 0.0
    t = int(np.argmax(np.diff(h)))
    return 0.5 * (h[t] + h[t + 1])


def parse_cut(spec):
    """Parse ``"gap"``, ``"height=H"`` or ``"k=K"`` into cut keyword arguments."""
    spec = spec.strip()
    if spec == "gap":
        return {"strategy": "gap"}
    key, sep, value = spec.partition("=")
    if sep and key == "height":
        return {"strategy": "height", "height": float(value)}
    if sep and key == "k":
        return {"strategy": "k", "n_clusters": int(value)}
    raise ValueError(f"invalid cut {spec!r}; use gap, height=H or k=K")


def assign_clusters(mu, w=None, lam=0.0, cut="gap", min_size=None, metric="weighted"):
    """Dendrogram and labels for a centroid matrix.

    Returns ``(labels, dendrogram, distance_matrix)``.
    """
    if metric == "weighted":
        dist = centroid_distance_matrix(mu, w, lam)
    elif metric == "euclidean":
        dist = centroid_distance_matrix(mu)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    dendro = average_linkage(dist)
    kwargs = parse_cut(cut) if isinstance(cut, str) else dict(cut)
    labels = cut_dendrogram(dendro, min_size=min_size, dist=dist, **kwargs)
    return labels, dendro, dist
