"""Reproduction harness for the simulation studies.

Each study returns a :class:`StudyReport` holding one row per run, a summary
dictionary, the resolved configuration and the seeds used. Studies vary the
data seed across repetitions.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .assign import assign_clusters, cut_dendrogram
from .bench import (
    adjusted_rand_index,
    gen_corners,
    gen_motivating,
    gen_sparse_centers,
    selection_metrics,
    standardize,
)
from .model import Hyperparameters
from .solver import fit
from .tune import grid_search

#: Reference ARI of the Libras comparison and its informational tolerance.
LIBRAS_REFERENCE = (0.79, 0.1)

#: Configuration shared by the studies: the feature-selection tuning values.
STUDY_CONFIG = Hyperparameters(gamma=100.0, lam=0.2, n_neighbors=5)


@dataclass
class StudyReport:
    study: str
    rows: list
    summary: dict
    config: dict
    seeds: dict = field(default_factory=dict)

    def write(self, out_dir):
        """Write ``<study>.csv`` (one row per run) and ``<study>_summary.json``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if self.rows:
            keys = list(self.rows[0])
            with open(out_dir / f"{self.study}.csv", "w", newline="", encoding="utf-8") as fh:
                writer = csv.DictWriter(fh, fieldnames=keys)
                writer.writeheader()
                writer.writerows(self.rows)
        (out_dir / f"{self.study}_summary.json").write_text(
            json.dumps(self.summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _map(func, items, n_jobs):
    items = list(items)
    if n_jobs <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(func, items))


def fit_and_label(X, config, cut="gap", w_init=None):
    """Fit and cut; returns ``(FitResult, labels, dendrogram)``."""
    res = fit(X, config, w_init=w_init)
    labels, dendro, _ = assign_clusters(res.centroids, res.weights, config.lam, cut=cut)
    return res, labels, dendro


def baseline_config(config):
    """Ridge-fusion convex clustering: uniform frozen weights, ``lam = 0``, fixed affinities."""
    return replace(config, lam=0.0, update_weights=False, affinity_update=0)


# ---------------------------------------------------------------- studies

def motivating_study(seeds=range(20), lambdas=(0.1, 0.2, 0.5), gammas=(10.0, 100.0),
                     config=None, n_jobs=1):
    """Two clusters in two of fourteen features; ``(lam, gamma)`` tuned per seed by hold-out."""
    config = replace(config or STUDY_CONFIG, affinity_update=1)

    def one(seed):
        ds = gen_motivating(seed=seed)
        X = standardize(ds.X)
        tuned = grid_search(X, lambdas, gammas, config, seed=seed)
        cfg = replace(config, lam=tuned.best_lambda, gamma=tuned.best_gamma)
        res, labels, _ = fit_and_label(X, cfg)
        return {"seed": seed, "lambda": cfg.lam, "gamma": cfg.gamma,
                "ari": adjusted_rand_index(ds.labels, labels), "iterations": res.n_iter,
                "converged": res.converged, "n_selected": int(np.sum(res.weights > 0)),
                "w0": float(res.weights[0]), "w1": float(res.weights[1])}

    rows = _map(one, seeds, n_jobs)
    aris = np.array([r["ari"] for r in rows])
    summary = {"n_runs": len(rows), "n_ari_at_least_0.95": int(np.sum(aris >= 0.95)),
               "mean_ari": float(aris.mean())}
    cfg = dict(asdict(config), lambdas=list(lambdas), gammas=list(gammas), standardize=True)
    return StudyReport("motivating", rows, summary, cfg,
                       {"data": list(seeds), "mask": list(seeds)})


def dimension_study(d_noise=(0, 10, 20, 30), seeds=range(20), config=None, n_jobs=1):
    """Corners design with growing noise dimension; full model against the frozen baseline."""
    config = replace(config or STUDY_CONFIG, affinity_update=1)
    base = baseline_config(config)

    def one(job):
        d, seed = job
        ds = gen_corners(d_noise=d, seed=seed)
        X = standardize(ds.X)
        out = {"d_noise": d, "seed": seed}
        for name, cfg in (("full", config), ("baseline", base)):
            res, labels, _ = fit_and_label(X, cfg)
            out[f"ari_{name}"] = adjusted_rand_index(ds.labels, labels)
            out[f"iterations_{name}"] = res.n_iter
        return out

    rows = _map(one, [(d, s) for d in d_noise for s in seeds], n_jobs)
    summary = {}
    for d in d_noise:
        sub = [r for r in rows if r["d_noise"] == d]
        full = float(np.mean([r["ari_full"] for r in sub]))
        basel = float(np.mean([r["ari_baseline"] for r in sub]))
        summary[f"d{d}"] = {"mean_ari_full": full, "mean_ari_baseline": basel,
                            "difference": full - basel}
    cfg = dict(asdict(config), d_noise=list(d_noise), standardize=True)
    return StudyReport("dimension", rows, summary, cfg, {"data": list(seeds)})


def selection_study(seeds=range(30), n=1000, p=100, k=5, n_informative=5, config=None,
                    n_jobs=1):
    """Feature selection on sparse-centers data: informative support and noise zeros."""
    config = replace(config or STUDY_CONFIG, affinity_update=1)

    def one(seed):
        ds = gen_sparse_centers(n=n, p=p, k=k, n_informative=n_informative, seed=seed)
        X = standardize(ds.X)
        res, labels, _ = fit_and_label(X, config)
        w = res.weights
        noise = np.setdiff1d(np.arange(p), ds.informative)
        sel = selection_metrics(w, ds.informative)
        return {"seed": seed, "all_informative_positive": bool(np.all(w[list(ds.informative)] > 0)),
                "noise_zeros": int(np.sum(w[noise] == 0)), "ari": adjusted_rand_index(ds.labels, labels),
                "support_precision": sel["support_precision"], "support_recall": sel["support_recall"],
                "iterations": res.n_iter, "converged": res.converged}

    rows = _map(one, seeds, n_jobs)
    summary = {"n_runs": len(rows),
               "n_all_informative_positive": int(sum(r["all_informative_positive"] for r in rows)),
               "median_noise_zeros": float(np.median([r["noise_zeros"] for r in rows])),
               "mean_ari": float(np.mean([r["ari"] for r in rows]))}
    cfg = dict(asdict(config), n=n, p=p, k=k, n_informative=n_informative, standardize=True)
    return StudyReport("selection", rows, summary, cfg, {"data": list(seeds)})


def accuracy_study(seeds=range(20), n=1000, p=100, k=20, config=None, n_jobs=1):
    """Clustering accuracy of the selection design with twenty clusters."""
    report = selection_study(seeds, n=n, p=p, k=k, config=config, n_jobs=n_jobs)
    report.study = "accuracy"
    return report


def affinity_study(seeds=range(20), n=50, p=200, k=4, n_informative=5, config=None, n_jobs=1):
    """Adaptive against fixed affinities on a small high-dimensional sample.

    Also records the fixed four-cluster cut of each dendrogram as a diagnostic
    separating fit quality from the gap rule.
    """
    config = config or STUDY_CONFIG
    variants = (("updates", replace(config, affinity_update=1)),
                ("static", replace(config, affinity_update=0)))

    def one(seed):
        ds = gen_sparse_centers(n=n, p=p, k=k, n_informative=n_informative, seed=seed)
        X = standardize(ds.X)
        out = {"seed": seed}
        for name, cfg in variants:
            res, labels, dendro = fit_and_label(X, cfg)
            out[f"ari_{name}"] = adjusted_rand_index(ds.labels, labels)
            out[f"ari_{name}_true_k"] = adjusted_rand_index(
                ds.labels, cut_dendrogram(dendro, "k", n_clusters=k))
            out[f"iterations_{name}"] = res.n_iter
        return out

    rows = _map(one, seeds, n_jobs)
    summary = {"n_runs": len(rows),
               "n_perfect_updates": int(sum(r["ari_updates"] == 1.0 for r in rows)),
               "n_imperfect_static": int(sum(r["ari_static"] < 1.0 for r in rows)),
               "n_perfect_updates_true_k": int(sum(r["ari_updates_true_k"] == 1.0 for r in rows))}
    cfg = dict(asdict(config), n=n, p=p, k=k, n_informative=n_informative, standardize=True)
    return StudyReport("affinity", rows, summary, cfg, {"data": list(seeds)})


def restart_stability(data_seeds=(0, 1, 2), n_trials=100, n=1000, p=100, k=5, config=None,
                      init_seed=0, n_jobs=1):
    """Random ``Unif(0, 1)`` initial weights on fixed datasets.

    Reports, per dataset, how often the informative support is recovered
    exactly and how far the partitions of different restarts disagree.
    """
    config = replace(config or STUDY_CONFIG, affinity_update=1)
    rng = np.random.Generator(np.random.PCG64(init_seed))
    inits = rng.uniform(0.0, 1.0, size=(len(data_seeds), n_trials, p))
    rows = []
    summary = {}
    for d_idx, seed in enumerate(data_seeds):
        ds = gen_sparse_centers(n=n, p=p, k=k, seed=seed)
        X = standardize(ds.X)

        def one(t, X=X, ds=ds, d_idx=d_idx):
            res, labels, _ = fit_and_label(X, config, w_init=inits[d_idx, t])
            sel = selection_metrics(res.weights, ds.informative)
            return labels, {"data_seed": seed, "trial": t, "ari": adjusted_rand_index(ds.labels, labels),
                            "support_precision": sel["support_precision"],
                            "support_recall": sel["support_recall"],
                            "exact_support": sel["support_precision"] == 1.0 == sel["support_recall"]}

        out = _map(one, range(n_trials), n_jobs)
        rows.extend(r for _, r in out)
        ref = out[0][0]
        summary[f"data{seed}"] = {
            "exact_support_rate": float(np.mean([r["exact_support"] for _, r in out])),
            "mean_ari": float(np.mean([r["ari"] for _, r in out])),
            "min_ari_to_first_restart": float(min(adjusted_rand_index(ref, lab) for lab, _ in out)),
        }
    cfg = dict(asdict(config), n=n, p=p, k=k, n_trials=n_trials, standardize=True)
    return StudyReport("restarts", rows, summary, cfg,
                       {"data": list(data_seeds), "init": init_seed})


def libras_report(path, config=None):
    """Fit a user-supplied Libras subset (label column last) and compare with the reference ARI.

    The comparison is informational only.
    """
    from .cli import load_csv

    X, labels, _ = load_csv(path, label_column="last")
    config = replace(config or STUDY_CONFIG, affinity_update=1)
    res, pred, _ = fit_and_label(standardize(X), config)
    ari = adjusted_rand_index(labels, pred)
    ref, tol = LIBRAS_REFERENCE
    row = {"ari": ari, "reference": ref, "within_tolerance": abs(ari - ref) <= tol,
           "n_clusters": int(pred.max()) + 1, "n_selected": int(np.sum(res.weights > 0)),
           "iterations": res.n_iter}
    return StudyReport("libras", [row], dict(row), dict(asdict(config), standardize=True))


def run_study(name, n_seeds=None, data=None, n_jobs=1):
    """Dispatch used by the command line."""
    if name == "libras":
        if data is None:
            raise ValueError("the libras study needs --data pointing to the CSV subset")
        return libras_report(data)
    if name == "restarts":
        trials = 100 if n_seeds is None else n_seeds
        return restart_stability(n_trials=trials, n_jobs=n_jobs)
    studies = {"motivating": (motivating_study, 20), "dimension": (dimension_study, 20),
               "selection": (selection_study, 30), "affinity": (affinity_study, 20),
               "accuracy": (accuracy_study, 20)}
    if name not in studies:
        raise ValueError(f"unknown study {name!r}")
    func, default = studies[name]
    return func(seeds=range(default if n_seeds is None else n_seeds), n_jobs=n_jobs)
