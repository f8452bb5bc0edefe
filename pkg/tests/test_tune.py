import numpy as np
import pytest

from biconvex.bench import gen_sparse_centers, standardize
from biconvex.model import AffinityGraph, Hyperparameters, objective_value
from biconvex.solver import fit, update_centroids_sweep
from biconvex.tune import HoldoutMask, fit_masked, grid_search, make_holdout_mask, validation_error


def test_mask_size_and_invariants():
    mask = make_holdout_mask(100, 50, 0.1, seed=1)
    assert len(mask) == 500
    assert len({tuple(c) for c in mask.held_out}) == 500
    obs = mask.observed()
    assert obs.any(axis=0).all() and obs.any(axis=1).all()


def test_mask_single_cell_and_determinism():
    assert len(make_holdout_mask(10, 10, 0.01, seed=0)) == 1
    a = make_holdout_mask(30, 7, 0.2, seed=3)
    b = make_holdout_mask(30, 7, 0.2, seed=3)
    np.testing.assert_array_equal(a.held_out, b.held_out)


def test_mask_never_empties_rows_or_columns():
    for seed in range(20):
        obs = make_holdout_mask(3, 4, 0.6, seed=seed).observed()
        assert obs.any(axis=0).all() and obs.any(axis=1).all()


def test_mask_validation():
    for f in (0.0, 1.0):
        with pytest.raises(ValueError, match="fraction"):
            make_holdout_mask(5, 5, f)
    with pytest.raises(ValueError, match="cannot hold out"):
        make_holdout_mask(2, 2, 0.9)


def test_empty_mask_is_bitwise_fit(rng):
    X = rng.standard_normal((15, 4))
    cfg = Hyperparameters(n_neighbors=3, max_iter=30, affinity_update=2)
    a = fit_masked(X, HoldoutMask.empty(15, 4), cfg)
    b = fit(X, cfg)
    np.testing.assert_array_equal(a.centroids, b.centroids)
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.objective_trace, b.objective_trace)


def test_mask_shape_checked(rng):
    with pytest.raises(ValueError, match="mask shape"):
        fit_masked(rng.standard_normal((4, 3)), HoldoutMask.empty(3, 4))


def test_held_out_cell_is_neighbour_average():
    X = np.array([[1.0], [2.0], [10.0]])
    phi = np.array([[0, 1, 0], [1, 0, 3], [0, 3, 0]], dtype=float)
    graph = AffinityGraph.from_dense(phi)
    obs = np.array([[True], [False], [True]])
    mu = np.array([[4.0], [0.0], [7.0]])
    update_centroids_sweep(X, mu, np.array([1.0]), graph, 2.0, 0.0, obs)
    # row 0 moved first; row 1 averages the latest neighbour values
    s = graph.coupling().toarray()
    expected = (s[1, 0] * mu[0, 0] + s[1, 2] * 7.0) / (s[1, 0] + s[1, 2])
    assert mu[1, 0] == pytest.approx(expected)


def test_masked_fit_descends_and_ignores_hidden_values(rng):
    X = standardize(gen_sparse_centers(n=40, p=8, seed=2).X)
    mask = make_holdout_mask(40, 8, 0.1, seed=0)
    cfg = Hyperparameters(gamma=5.0, max_iter=60)
    res = fit_masked(X, mask, cfg)
    assert np.all(np.diff(res.objective_trace) <= 1e-9)
    X2 = X.copy()
    X2[mask.held_out[:, 0], mask.held_out[:, 1]] = 1e6
    res2 = fit_masked(X2, mask, cfg)
    np.testing.assert_allclose(res2.centroids, res.centroids, atol=1e-9)
    obs = mask.observed()
    g = objective_value(X, res.centroids, res.weights, res.affinity, 5.0, cfg.lam, obs)
    assert g == pytest.approx(res.objective)


def test_validation_error(rng):
    X = rng.standard_normal((5, 3))
    mask = HoldoutMask(np.array([[1, 2]]), (5, 3), 0.1)
    assert validation_error(X, X, mask) == 0.0
    mu = X.copy()
    mu[1, 2] -= 2.0
    assert validation_error(X, mu, mask) == 4.0
    mask = make_holdout_mask(5, 3, 0.4, seed=1)
    mu = rng.standard_normal((5, 3))
    naive = sum((X[i, l] - mu[i, l]) ** 2 for i, l in mask.held_out)
    assert validation_error(X, mu, mask) == pytest.approx(naive, abs=1e-12)
    assert validation_error(X, mu, HoldoutMask.empty(5, 3)) == 0.0


def test_grid_search_single_point_and_determinism(rng, tmp_path):
    X = rng.standard_normal((20, 3))
    cfg = Hyperparameters(n_neighbors=3, max_iter=20)
    one = grid_search(X, [0.3], [2.0], cfg)
    assert (one.best_lambda, one.best_gamma) == (0.3, 2.0)
    a = grid_search(X, [0.1, 0.5, 0.5], [1.0, 10.0], cfg, seed=4)
    b = grid_search(X, [0.1, 0.5, 0.5], [1.0, 10.0], cfg, seed=4, n_jobs=3)
    assert a.table == b.table
    assert (a.best_lambda, a.best_gamma) == (b.best_lambda, b.best_gamma)
    a.to_csv(tmp_path / "tune.csv")
    lines = (tmp_path / "tune.csv").read_text().splitlines()
    assert lines[0] == "lambda,gamma,validation_error,iterations,converged"
    assert len(lines) == 7
    with pytest.raises(ValueError, match="nonempty"):
        grid_search(X, [], [1.0])


def test_grid_search_ties_prefer_weaker_regularisation(monkeypatch, rng):
    import biconvex.tune as tune

    monkeypatch.setattr(tune, "validation_error", lambda X, mu, mask: 1.0)
    res = grid_search(rng.standard_normal((10, 2)), [0.5, 0.1], [3.0, 1.0],
                      Hyperparameters(n_neighbors=2, max_iter=2))
    assert (res.best_lambda, res.best_gamma) == (0.1, 1.0)


def test_grid_search_prefers_fusion_over_interpolation():
    # recorded seeds where the margin is clear
    for seed in (0, 1, 2):
        X = standardize(gen_sparse_centers(n=60, p=10, k=3, spread_sd=0.1, seed=seed).X)
        res = grid_search(X, [0.2], [0.0, 10.0], Hyperparameters(max_iter=100), seed=seed)
        assert res.best_gamma != 0.0
