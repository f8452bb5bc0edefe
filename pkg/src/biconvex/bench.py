"""Synthetic benchmark designs, standardisation and evaluation metrics."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import comb

#: Bit generator behind every dataset; recorded in metadata.
RNG_ALGORITHM = "numpy.random.PCG64"


@dataclass
class LabeledDataset:
    X: np.ndarray
    labels: np.ndarray
    informative: tuple
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path):
        """Write the data with a header row and the label as last column.

        A sidecar ``<stem>.meta.json`` records generator name, parameters and seed.
        """
        path = Path(path)
        p = self.X.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{l}" for l in range(p)] + ["label"])
            for row, lab in zip(self.X, self.labels):
                writer.writerow([repr(float(v)) for v in row] + [int(lab)])
        meta = dict(self.metadata, informative=list(self.informative))
        sidecar = path.with_suffix(".meta.json")
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
        return sidecar


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def _meta(design, seed, **params):
    return {"design": design, "seed": seed, "rng": RNG_ALGORITHM, "params": params}


def standardize(X):
    """Center each column and scale it to unit sample standard deviation."""
    X = np.asarray(X, dtype=float)
    sd = X.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(sd > 0))
    if bad.size:
        raise ValueError(f"cannot standardize constant column(s) {bad.tolist()}")
    return (X - X.mean(axis=0)) / sd


def gen_corners(n_per_cluster=25, d_noise=0, sd=0.25, seed=0):
    """Four Gaussian clusters at ``(+-1, +-1)`` plus standard normal noise features."""
    if n_per_cluster < 1:
        raise ValueError("n_per_cluster must be positive")
    if not sd > 0:
        raise ValueError("sd must be positive")
    rng = _rng(seed)
    corners = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    labels = np.repeat(np.arange(4), n_per_cluster)
    signal = corners[labels] + sd * rng.standard_normal((labels.size, 2))
    noise = rng.standard_normal((labels.size, d_noise))
    X = np.hstack([signal, noise])
    meta = _meta("corners", seed, n_per_cluster=n_per_cluster, d_noise=d_noise, sd=sd)
    return LabeledDataset(X, labels, (0, 1), meta)


def gen_sparse_centers(n=1000, p=100, k=5, n_informative=5, spread_sd=0.015, seed=0):
    """Clusters separated on the first ``n_informative`` features only.

    Center coordinates on informative features are uniform on (0, 1). Each
    point draws one cluster uniformly; its informative features are
    ``Normal(theta, spread_sd)`` and all other features standard normal.
    """
    if n_informative > p:
        raise ValueError("n_informative cannot exceed p")
    rng = _rng(seed)
    theta = rng.uniform(0.0, 1.0, size=(k, n_informative))
    labels = rng.integers(0, k, size=n)
    X = rng.standard_normal((n, p))
    X[:, :n_informative] = theta[labels] + spread_sd * X[:, :n_informative]
    meta = _meta("sparse_centers", seed, n=n, p=p, k=k, n_informative=n_informative,
                 spread_sd=spread_sd)
    meta["centers"] = theta.tolist()
    return LabeledDataset(X, labels, tuple(range(n_informative)), meta)


def gen_motivating(seed=0, n_per_cluster=100, sd=0.25, n_noise=12):
    """Two clusters at ``(-1, -1)`` and ``(1, 1)`` plus twelve noise features."""
    rng = _rng(seed)
    means = np.array([[-1.0, -1.0], [1.0, 1.0]])
    labels = np.repeat(np.arange(2), n_per_cluster)
    signal = means[labels] + sd * rng.standard_normal((labels.size, 2))
    X = np.hstack([signal, rng.standard_normal((labels.size, n_noise))])
    meta = _meta("motivating", seed, n_per_cluster=n_per_cluster, sd=sd, n_noise=n_noise)
    return LabeledDataset(X, labels, (0, 1), meta)


def contingency_table(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"label vectors must have equal length, got {a.shape} and {b.shape}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def adjusted_rand_index(a, b):
    """Adjusted Rand index between two labelings (permutation model)."""
    table = contingency_table(a, b)
    n = int(table.sum())
    sum_cells = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    expected = sum_a * sum_b / comb(n, 2) if n > 1 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial (all singletons or one block): they coincide
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def selection_metrics(w, informative):
    """Support precision/recall of a weight vector against the informative set."""
    w = np.asarray(w, dtype=float)
    informative = {int(l) for l in informative}
    if any(l < 0 or l >= w.size for l in informative):
        raise ValueError("informative indices out of range")
    support = set(np.flatnonzero(w > 0).tolist())
    hit = len(support & informative)
    return {
        "support_precision": hit / len(support) if support else 0.0,
        "support_recall": hit / len(informative) if informative else 1.0,
        "exact_zero_count": int(np.sum(w == 0)),
    }
