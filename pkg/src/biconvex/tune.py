"""Hold-out matrix completion for choosing ``(lam, gamma)``.

A random ~10% of the cells are hidden, the model is fitted on the remaining
cells and each grid point is scored by the squared reconstruction error of
the hidden cells.
"""
from __future__ import annotations

import csv
import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import solver
from .model import Hyperparameters


@dataclass(frozen=True, eq=False)
class HoldoutMask:
    """Held-out cells of an ``n x p`` matrix, as an ``(m, 2)`` array of ``(i, l)``."""

    held_out: np.ndarray
    shape: tuple
    fraction: float

    def __len__(self):
        return len(self.held_out)

    def observed(self):
        """Boolean ``n x p`` matrix, False on held-out cells."""
        obs = np.ones(self.shape, dtype=bool)
        if len(self.held_out):
            obs[self.held_out[:, 0], self.held_out[:, 1]] = False
        return obs

    @classmethod
    def empty(cls, n, p):
        return cls(np.empty((0, 2), dtype=np.intp), (n, p), 0.0)


def make_holdout_mask(n, p, fraction=0.1, seed=0):
    """Hold out ``round(fraction * n * p)`` uniformly drawn cells.

    Cells are drawn without replacement; a draw that would leave its row or
    column without any observed cell is rejected and the next one is tried.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    m = int(round(fraction * n * p))
    if m > n * p - max(n, p):
        raise ValueError(f"cannot hold out {m} cells of a {n}x{p} matrix "
                         "while keeping every row and column observed")
    rng = np.random.Generator(np.random.PCG64(seed))
    row_left = np.full(n, p)
    col_left = np.full(p, n)
    chosen = []
    for cell in rng.permutation(n * p):
        if len(chosen) == m:
            break
        i, l = divmod(int(cell), p)
        if row_left[i] > 1 and col_left[l] > 1:
            row_left[i] -= 1
            col_left[l] -= 1
            chosen.append((i, l))
    if len(chosen) < m:
        raise ValueError(f"could only hold out {len(chosen)} of {m} cells")
    held = np.array(sorted(chosen), dtype=np.intp).reshape(-1, 2)
    return HoldoutMask(held, (n, p), float(fraction))


def fit_masked(X, mask, config=None, **kwargs):
    """Fit on the observed cells only; identical to :func:`solver.fit` for an empty mask."""
    X = np.asarray(X, dtype=float)
    if tuple(mask.shape) != X.shape:
        raise ValueError(f"mask shape {mask.shape} does not match data shape {X.shape}")
    observed = mask.observed() if len(mask) else None
    return solver.fit(X, config, observed=observed, **kwargs)


def validation_error(X, mu, mask):
    """Sum of squared errors over the held-out cells."""
    X = np.asarray(X, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if X.shape != mu.shape:
        raise ValueError(f"dimension mismatch: X {X.shape} vs centroids {mu.shape}")
    if not len(mask):
        return 0.0
    i, l = mask.held_out[:, 0], mask.held_out[:, 1]
    r = X[i, l] - mu[i, l]
    return float(np.dot(r, r))


@dataclass
class TuneResult:
    best_lambda: float
    best_gamma: float
    table: list
    mask: HoldoutMask

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lambda", "gamma", "validation_error", "iterations", "converged"])
            for row in self.table:
                writer.writerow([repr(row["lambda"]), repr(row["gamma"]),
                                 repr(row["validation_error"]), row["iterations"],
                                 int(row["converged"])])


def grid_search(X, lambdas, gammas, config=None, fraction=0.1, seed=0, n_jobs=1):
    """Pick ``(lam, gamma)`` minimising the hold-out reconstruction error.

    One mask is shared by every grid point. Ties go to the smaller ``gamma``,
    then the smaller ``lam``.
    """
    X = np.asarray(X, dtype=float)
    lambdas = [float(v) for v in lambdas]
    gammas = [float(v) for v in gammas]
    if not lambdas or not gammas:
        raise ValueError("lambda and gamma grids must be nonempty")
    config = Hyperparameters() if config is None else config
    mask = make_holdout_mask(*X.shape, fraction=fraction, seed=seed)
    grid = list(itertools.product(lambdas, gammas))

    def score(pair):
        lam, gamma = pair
        res = fit_masked(X, mask, replace(config, lam=lam, gamma=gamma))
        return {"lambda": lam, "gamma": gamma,
                "validation_error": validation_error(X, res.centroids, mask),
                "iterations": res.n_iter, "converged": res.converged}

    workers = n_jobs if n_jobs > 0 else (os.cpu_count() or 1)
    if workers == 1:
        table = [score(pair) for pair in grid]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            table = list(pool.map(score, grid))
    best = min(table, key=lambda r: (r["validation_error"], r["gamma"], r["lambda"]))
    return TuneResult(best["lambda"], best["gamma"], table, mask)
