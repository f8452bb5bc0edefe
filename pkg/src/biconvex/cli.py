"""Command-line interface.

Subcommands: ``fit``, ``path``, ``tune``, ``simulate``, ``eval`` and
``reproduce``. Every command that writes files also writes a
``manifest.json`` with the resolved configuration, seeds, input and output
digests and library versions.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .affinity import write_affinities_csv
from .assign import assign_clusters, parse_cut
from .bench import (
    RNG_ALGORITHM,
    adjusted_rand_index,
    gen_corners,
    gen_motivating,
    gen_sparse_centers,
    selection_metrics,
    standardize,
)
from .model import Hyperparameters
from .solver import fit, solution_path
from .tune import grid_search

logger = logging.getLogger("biconvex")


class InputError(ValueError):
    """Malformed input file or configuration."""


# ---------------------------------------------------------------- ingestion

def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_csv(path, has_header=None, label_column=None):
    """Read a comma-separated numeric matrix.

    Parameters
    ----------
    path : str or Path
    has_header : bool, optional
        ``None`` detects a header: the first row is one if any cell is non-numeric.
    label_column : int or "last", optional
        Column holding labels. It is removed from the matrix and factor-encoded
        to ``0..c-1`` in order of first appearance.

    Returns
    -------
    X : ndarray of shape (n, p)
    labels : ndarray of shape (n,) or None
    header : list of str or None
    """
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    numbered = [(ln, [c.strip() for c in r]) for ln, r in enumerate(rows, start=1)
                if any(c.strip() for c in r)]
    if not numbered:
        raise InputError(f"{path}: file is empty")
    if has_header is None:
        has_header = not all(_is_number(c) for c in numbered[0][1])
    header = numbered[0][1] if has_header else None
    body = numbered[1:] if has_header else numbered
    if not body:
        raise InputError(f"{path}: no data rows")
    width = len(body[0][1])
    for ln, r in body:
        if len(r) != width:
            raise InputError(f"{path}: line {ln} has {len(r)} fields, expected {width}")
    if header is not None and len(header) != width:
        raise InputError(f"{path}: header has {len(header)} fields, data rows have {width}")

    lab_idx = None
    if label_column is not None:
        lab_idx = width - 1 if label_column == "last" else int(label_column)
        if not 0 <= lab_idx < width:
            raise InputError(f"{path}: label column {label_column} out of range for {width} columns")
    X = np.empty((len(body), width - (lab_idx is not None)))
    raw_labels = []
    for r, (ln, cells) in enumerate(body):
        c_out = 0
        for c, cell in enumerate(cells):
            if c == lab_idx:
                raw_labels.append(cell)
                continue
            try:
                X[r, c_out] = float(cell)
            except ValueError:
                raise InputError(f"{path}: non-numeric value {cell!r} at line {ln}, column {c + 1}") from None
            c_out += 1
    if not np.all(np.isfinite(X)):
        r, c = np.argwhere(~np.isfinite(X))[0]
        raise InputError(f"{path}: non-finite value at line {body[r][0]}, column {c + 1}")
    labels = None
    if lab_idx is not None:
        codes = {}
        labels = np.array([codes.setdefault(v, len(codes)) for v in raw_labels], dtype=np.intp)
        if header is not None:
            header = [h for i, h in enumerate(header) if i != lab_idx]
    return X, labels, header


def load_labels(path):
    """Labels from the last column of a CSV (``labels.csv`` or a simulated dataset)."""
    _, labels, _ = load_csv(path, label_column="last")
    return labels


def load_weights(path):
    """Weights from the last column of ``weights.csv``."""
    X, _, _ = load_csv(path)
    return X[:, -1]


# ------------------------------------------------------------------ outputs

def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def library_versions():
    import numba
    import scipy
    import sklearn

    return {"biconvex": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "numba": numba.__version__}


def write_matrix(path, M, header=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        for row in np.atleast_2d(M):
            writer.writerow([repr(float(v)) for v in row])


def write_weights(path, w):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "weight"])
        for l, v in enumerate(w):
            writer.writerow([l, repr(float(v))])


def write_labels(path, labels):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label"])
        for i, v in enumerate(labels):
            writer.writerow([i, int(v)])


def write_trace(path, trace):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "objective"])
        for t, v in enumerate(trace, start=1):
            writer.writerow([t, repr(float(v))])


def write_manifest(out_dir, command, config, seeds=None, inputs=(), extra=None):
    out_dir = Path(out_dir)
    outputs = {p.name: sha256_file(p) for p in sorted(out_dir.iterdir())
               if p.is_file() and p.name != "manifest.json"}
    manifest = {
        "command": command,
        "config": config,
        "seeds": seeds or {},
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": outputs,
        "versions": library_versions(),
        "rng": RNG_ALGORITHM,
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ------------------------------------------------------------ configuration

def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc.strerror}") from exc
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InputError(f"{path}: line {ln} is not of the form key = value")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _apply_config_file(parser, args_list):
    """Re-parse with file values installed as defaults (flags still win)."""
    pre, _ = parser.parse_known_args(args_list)
    if not getattr(pre, "config", None):
        return parser.parse_args(args_list)
    sub = parser._subparsers_by_name[pre.command]
    actions = {}
    for a in sub._actions:
        if a.dest in ("help", "config"):
            continue
        actions[a.dest] = a
        for opt in a.option_strings:
            if opt.startswith("--"):
                actions[opt[2:].replace("-", "_")] = a
    defaults = {}
    for key, raw in read_config_file(pre.config).items():
        if key not in actions:
            raise InputError(f"unknown configuration key {key!r} for {pre.command}")
        action = actions[key]
        if action.nargs == 0:
            low = raw.lower()
            if low not in _TRUE | _FALSE:
                raise InputError(f"configuration key {key!r} expects a boolean, got {raw!r}")
            defaults[action.dest] = (low in _TRUE) == bool(action.const)
        else:
            try:
                defaults[action.dest] = action.type(raw) if action.type else raw
            except (TypeError, ValueError) as exc:
                raise InputError(f"invalid value {raw!r} for configuration key {key!r}") from exc
    sub.set_defaults(**defaults)
    return parser.parse_args(args_list)


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _cut(text):
    try:
        parse_cut(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def resolve_threads(flag):
    """Worker cap from ``--threads`` or ``BCC_THREADS``; ``0`` means all cores."""
    value = flag
    if value is None:
        env = os.environ.get("BCC_THREADS")
        if env:
            try:
                value = int(env)
            except ValueError:
                raise InputError(f"BCC_THREADS must be an integer, got {env!r}") from None
    value = 0 if value is None else int(value)
    if value < 0:
        raise InputError(f"thread count must be nonnegative, got {value}")
    return value if value > 0 else (os.cpu_count() or 1)


def config_from_args(args):
    every = args.affinity_every if args.update_affinities else 0
    return Hyperparameters(gamma=args.gamma, lam=args.lam, n_neighbors=args.knn,
                           bandwidth=args.bandwidth, max_iter=args.max_iter, tol=args.tol,
                           affinity_update=every, inner_sweeps=args.inner_sweeps,
                           update_weights=not args.freeze_weights)


def _add_data_args(p):
    p.add_argument("data", type=Path, help="input CSV, rows are samples")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    hdr = p.add_mutually_exclusive_group()
    hdr.add_argument("--header", dest="header", action="store_const", const=True, default=None,
                     help="first row is a header (detected by default)")
    hdr.add_argument("--no-header", dest="header", action="store_const", const=False)
    p.add_argument("--label-column", default=None,
                   help="column index (0-based) or 'last' holding truth labels to exclude")
    p.add_argument("--standardize", action="store_true", help="center and scale each column")
    p.add_argument("--config", type=Path, help="key = value defaults file")
    p.add_argument("--threads", type=int, default=None, help="worker cap, 0 = all cores")


def _add_model_args(p):
    d = Hyperparameters()
    p.add_argument("--gamma", type=float, default=d.gamma, help="fusion strength")
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam, help="sparsity strength")
    p.add_argument("--knn", type=int, default=d.n_neighbors, help="neighbours per sample")
    p.add_argument("--bandwidth", type=float, default=d.bandwidth,
                   help="kernel bandwidth of the initial affinities")
    p.add_argument("--max-iter", type=int, default=d.max_iter)
    p.add_argument("--tol", type=float, default=d.tol)
    p.add_argument("--update-affinities", action="store_true",
                   help="recompute affinities in the learned feature space")
    p.add_argument("--affinity-every", type=int, default=1,
                   help="iterations between affinity updates")
    p.add_argument("--inner-sweeps", type=int, default=d.inner_sweeps)
    p.add_argument("--freeze-weights", action="store_true", help="keep the initial weights")
    p.add_argument("--cut", type=_cut, default="gap", help="gap, height=H or k=K")
    p.add_argument("--min-cluster-size", type=int, default=None)
    p.add_argument("--linkage-metric", choices=["weighted", "euclidean"], default="weighted")


def build_parser():
    parser = argparse.ArgumentParser(prog="biconvex",
                                     description="Biconvex clustering with learned feature weights.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("fit", help="fit, assign clusters and write outputs")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--write-affinities", action="store_true", help="also write affinities.csv")

    p = subs.add_parser("path", help="warm-started solution path over a gamma grid")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--gammas", type=_float_list, required=True, help="ascending, comma-separated")

    p = subs.add_parser("tune", help="hold-out grid search over (lambda, gamma)")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--lambdas", type=_float_list, required=True)
    p.add_argument("--gammas", type=_float_list, required=True)
    p.add_argument("--fraction", type=float, default=0.1, help="share of cells held out")
    p.add_argument("--seed", type=int, default=0, help="mask seed")
    p.add_argument("--no-refit", dest="refit", action="store_false",
                   help="skip refitting the winner on all cells")

    p = subs.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--design", choices=["corners", "sparse", "motivating"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-dims", type=int, default=0, help="corners: noise features")
    p.add_argument("--n-per-cluster", type=int, default=None)
    p.add_argument("--sd", type=float, default=0.25, help="corners/motivating: cluster sd")
    p.add_argument("--n", type=int, default=1000, help="sparse: samples")
    p.add_argument("--p", type=int, default=100, help="sparse: features")
    p.add_argument("--k", type=int, default=5, help="sparse: clusters")
    p.add_argument("--informative", type=int, default=5, help="sparse: informative features")
    p.add_argument("--spread-sd", type=float, default=0.015, help="sparse: within-cluster sd")
    p.add_argument("--out", type=Path, default=Path("dataset.csv"))
    p.add_argument("--config", type=Path, help="key = value defaults file")

    p = subs.add_parser("eval", help="ARI between label files, selection metrics for weights")
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--weights", type=Path, help="weights.csv to score against --informative")
    p.add_argument("--informative", type=_int_list, default=None)
    p.add_argument("--config", type=Path, help="key = value defaults file")

    p = subs.add_parser("reproduce", help="run a simulation study")
    p.add_argument("study", choices=["motivating", "dimension", "selection", "affinity",
                                     "accuracy", "restarts", "libras"])
    p.add_argument("--seeds", type=int, default=None, help="number of seeds")
    p.add_argument("--data", type=Path, default=None, help="libras: CSV with label column last")
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--config", type=Path, help="key = value defaults file")
    p.add_argument("--threads", type=int, default=None, help="worker cap, 0 = all cores")

    parser._subparsers_by_name = subs.choices
    return parser


# ----------------------------------------------------------------- commands

def _read_input(args):
    label_col = args.label_column
    if label_col is not None and label_col != "last":
        try:
            label_col = int(label_col)
        except ValueError:
            raise InputError(f"--label-column must be an integer or 'last', got {label_col!r}") from None
    X, labels, _ = load_csv(args.data, has_header=args.header, label_column=label_col)
    if args.standardize:
        X = standardize(X)
    return X, labels


def _resolved(args, config):
    out = asdict(config)
    out.update(cut=args.cut, min_cluster_size=args.min_cluster_size,
               linkage_metric=args.linkage_metric, standardize=args.standardize)
    return out


def _write_fit(out, X, result, args, write_aff=False):
    labels, dendro, _ = assign_clusters(result.centroids, result.weights, args.lam, cut=args.cut,
                                        min_size=args.min_cluster_size, metric=args.linkage_metric)
    write_weights(out / "weights.csv", result.weights)
    write_matrix(out / "centroids.csv", result.centroids,
                 header=[f"x{l}" for l in range(X.shape[1])])
    write_labels(out / "labels.csv", labels)
    dendro.to_csv(out / "dendrogram.csv")
    write_trace(out / "trace.csv", result.objective_trace)
    if write_aff:
        write_affinities_csv(result.affinity, out / "affinities.csv")
    return labels


def cmd_fit(args):
    X, truth = _read_input(args)
    config = config_from_args(args)
    args.out.mkdir(parents=True, exist_ok=True)
    result = fit(X, config)
    labels = _write_fit(args.out, X, result, args, args.write_affinities)
    summary = {"n_iter": result.n_iter, "converged": result.converged,
               "objective": result.objective, "n_clusters": int(labels.max()) + 1,
               "n_selected": int(np.sum(result.weights > 0))}
    if truth is not None:
        summary["ari"] = adjusted_rand_index(truth, labels)
    write_manifest(args.out, "fit", _resolved(args, config), inputs=[args.data],
                   extra={"summary": summary})
    print(json.dumps(summary))
    return 0


def cmd_path(args):
    X, _ = _read_input(args)
    config = config_from_args(args)
    args.out.mkdir(parents=True, exist_ok=True)
    results = solution_path(X, config, args.gammas)
    with open(args.out / "path.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gamma", "objective", "iterations", "converged", "n_selected", "n_clusters"])
        for g, res in zip(args.gammas, results):
            labels, _, _ = assign_clusters(res.centroids, res.weights, args.lam, cut=args.cut,
                                           min_size=args.min_cluster_size, metric=args.linkage_metric)
            writer.writerow([repr(g), repr(res.objective), res.n_iter, int(res.converged),
                             int(np.sum(res.weights > 0)), int(labels.max()) + 1])
    write_matrix(args.out / "weights_path.csv", np.column_stack([args.gammas, [r.weights for r in results]]),
                 header=["gamma"] + [f"w{l}" for l in range(X.shape[1])])
    resolved = dict(_resolved(args, config), gammas=args.gammas)
    write_manifest(args.out, "path", resolved, inputs=[args.data])
    return 0


def cmd_tune(args):
    X, truth = _read_input(args)
    config = config_from_args(args)
    args.out.mkdir(parents=True, exist_ok=True)
    workers = resolve_threads(args.threads)
    res = grid_search(X, args.lambdas, args.gammas, config, fraction=args.fraction,
                      seed=args.seed, n_jobs=workers)
    res.to_csv(args.out / "tune.csv")
    summary = {"best_lambda": res.best_lambda, "best_gamma": res.best_gamma, "refit": args.refit}
    resolved = dict(_resolved(args, config), lambdas=args.lambdas, gammas=args.gammas,
                    fraction=args.fraction)
    if args.refit:
        from dataclasses import replace

        best = replace(config, lam=res.best_lambda, gamma=res.best_gamma)
        args.lam = res.best_lambda
        result = fit(X, best)
        labels = _write_fit(args.out, X, result, args)
        summary.update(n_clusters=int(labels.max()) + 1, n_selected=int(np.sum(result.weights > 0)))
        if truth is not None:
            summary["ari"] = adjusted_rand_index(truth, labels)
    write_manifest(args.out, "tune", resolved, seeds={"mask": args.seed}, inputs=[args.data],
                   extra={"summary": summary})
    print(json.dumps(summary))
    return 0


def cmd_simulate(args):
    if args.design == "corners":
        ds = gen_corners(n_per_cluster=args.n_per_cluster or 25, d_noise=args.noise_dims,
                         sd=args.sd, seed=args.seed)
    elif args.design == "sparse":
        ds = gen_sparse_centers(n=args.n, p=args.p, k=args.k, n_informative=args.informative,
                                spread_sd=args.spread_sd, seed=args.seed)
    else:
        ds = gen_motivating(seed=args.seed, n_per_cluster=args.n_per_cluster or 100, sd=args.sd)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    sidecar = ds.to_csv(args.out)
    print(json.dumps({"data": str(args.out), "metadata": str(sidecar),
                      "shape": list(ds.X.shape), "sha256": sha256_file(args.out)}))
    return 0


def cmd_eval(args):
    truth = load_labels(args.truth)
    pred = load_labels(args.pred)
    if truth.shape != pred.shape:
        raise InputError(f"label files hold {truth.size} and {pred.size} labels")
    report = {"ari": adjusted_rand_index(truth, pred)}
    if args.weights is not None:
        if args.informative is None:
            raise InputError("--weights needs --informative")
        report.update(selection_metrics(load_weights(args.weights), args.informative))
    print(json.dumps(report))
    return 0


def cmd_reproduce(args):
    from . import experiments

    args.out.mkdir(parents=True, exist_ok=True)
    report = experiments.run_study(args.study, n_seeds=args.seeds, data=args.data,
                                   n_jobs=resolve_threads(args.threads))
    report.write(args.out)
    write_manifest(args.out, f"reproduce {args.study}", report.config, seeds=report.seeds,
                   inputs=[args.data] if args.data else (), extra={"summary": report.summary})
    print(json.dumps(report.summary))
    return 0


COMMANDS = {"fit": cmd_fit, "path": cmd_path, "tune": cmd_tune, "simulate": cmd_simulate,
            "eval": cmd_eval, "reproduce": cmd_reproduce}


def run(argv=None):
    """Parse ``argv`` and run the chosen subcommand; returns the exit code."""
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config_file(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (InputError, ValueError, ArithmeticError, OSError) as exc:
        print(f"biconvex: error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())
