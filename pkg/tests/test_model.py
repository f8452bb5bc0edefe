import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from biconvex.model import (
    AffinityGraph,
    Hyperparameters,
    norm_coefficients,
    objective_value,
    soft_threshold,
    weighted_norm_sq,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


@pytest.mark.parametrize("x, y, expected", [(3, 1, 2), (-3, 1, -2), (0.5, 1, 0), (1, 1, 0), (-1, 1, 0)])
def test_soft_threshold_pieces(x, y, expected):
    assert soft_threshold(x, y) == expected


def test_soft_threshold_rejects_negative_threshold():
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


@given(finite, st.floats(0, 1e3))
def test_soft_threshold_shrinks_toward_zero(x, y):
    s = soft_threshold(x, y)
    assert abs(s) <= abs(x)
    assert s == 0 or np.sign(s) == np.sign(x)
    assert abs(s) == pytest.approx(max(abs(x) - y, 0.0), abs=1e-12)


def test_weighted_norm_examples():
    assert weighted_norm_sq(np.zeros(3), np.full(3, 1 / 3), 0.2) == 0.0
    y = np.array([1.0, -2.0, 3.0])
    assert weighted_norm_sq(y, np.full(3, 1 / 3), 0.0) == pytest.approx(np.sum(y**2) / 9)
    assert weighted_norm_sq([1, 2], [0.75, 0.25], 0.2) == pytest.approx(1.1625, abs=1e-14)


def test_weighted_norm_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        weighted_norm_sq([1.0, 2.0], [1.0], 0.0)


@given(arrays(float, 4, elements=finite), st.floats(-10, 10), st.floats(0, 5))
def test_weighted_norm_homogeneous(y, c, lam):
    w = np.array([0.1, 0.2, 0.3, 0.4])
    assert weighted_norm_sq(c * y, w, lam) == pytest.approx(c * c * weighted_norm_sq(y, w, lam),
                                                            rel=1e-9, abs=1e-9)


def test_norm_coefficients():
    np.testing.assert_allclose(norm_coefficients([0.5, 0.0], 0.2), [0.35, 0.0])


def _pair_graph():
    return AffinityGraph.from_dense([[0, 1], [1, 0]])


def test_objective_hand_example():
    X = np.array([[0.0], [1.0]])
    assert objective_value(X, X, np.array([1.0]), _pair_graph(), 1.0, 0.0) == pytest.approx(2.0)


def test_objective_perfect_fit_without_fusion(rng):
    X = rng.standard_normal((6, 3))
    graph = AffinityGraph.from_dense(rng.uniform(size=(6, 6)))
    assert objective_value(X, X, np.full(3, 1 / 3), graph, 0.0, 0.7) == 0.0


def test_objective_identical_rows_have_no_fusion(rng):
    X = np.tile(rng.standard_normal(3), (5, 1))
    mu = np.tile(rng.standard_normal(3), (5, 1))
    w = np.array([0.2, 0.3, 0.5])
    graph = AffinityGraph.from_dense(np.ones((5, 5)))
    expected = sum(weighted_norm_sq(X[i] - mu[i], w, 0.4) for i in range(5))
    assert objective_value(X, mu, w, graph, 10.0, 0.4) == pytest.approx(expected)


def test_objective_reduces_to_ridge_fusion_clustering(rng):
    n, p = 7, 4
    X = rng.standard_normal((n, p))
    mu = rng.standard_normal((n, p))
    phi = rng.uniform(size=(n, n))
    np.fill_diagonal(phi, 0)
    graph = AffinityGraph.from_dense(phi)
    fusion = sum(phi[i, j] * np.sum((mu[i] - mu[j]) ** 2) for i in range(n) for j in range(n))
    expected = np.sum((X - mu) ** 2) / p**2 + 2.5 * fusion
    assert objective_value(X, mu, np.full(p, 1 / p), graph, 2.5, 0.0) == pytest.approx(expected)


def test_objective_matches_double_loop(rng):
    n, p = 5, 3
    X, mu = rng.standard_normal((2, n, p))
    w = rng.dirichlet(np.ones(p))
    phi = rng.uniform(size=(n, n)) * (rng.uniform(size=(n, n)) < 0.5)
    np.fill_diagonal(phi, 0)
    gamma, lam = 1.7, 0.3
    total = 0.0
    for i in range(n):
        for l in range(p):
            total += (w[l] ** 2 + lam * w[l]) * (X[i, l] - mu[i, l]) ** 2
        for j in range(n):
            if i != j:
                total += gamma * phi[i, j] * np.sum((mu[i] - mu[j]) ** 2)
    graph = AffinityGraph.from_dense(phi)
    assert objective_value(X, mu, w, graph, gamma, lam) == pytest.approx(total, rel=1e-12)


def test_objective_shape_checks(rng):
    X = rng.standard_normal((3, 2))
    graph = AffinityGraph.from_dense(np.ones((3, 3)))
    with pytest.raises(ValueError, match="dimension mismatch"):
        objective_value(X, X[:2], np.array([0.5, 0.5]), graph, 1.0, 0.0)
    with pytest.raises(ValueError, match="dimension mismatch"):
        objective_value(X, X, np.array([1.0]), graph, 1.0, 0.0)
    with pytest.raises(ValueError, match="nodes"):
        objective_value(X, X, np.array([0.5, 0.5]), _pair_graph(), 1.0, 0.0)


def test_affinity_graph_validation():
    with pytest.raises(ValueError, match="square"):
        AffinityGraph(sp.csr_matrix(np.ones((2, 3))))
    with pytest.raises(ValueError, match="nonnegative"):
        AffinityGraph.from_edges([0], [1], [-1.0], 2)
    with pytest.raises(ValueError, match="self-loops"):
        AffinityGraph.from_edges([0], [0], [1.0], 2)


def test_affinity_graph_coupling_is_symmetrised():
    graph = AffinityGraph.from_edges([0, 1, 2], [1, 2, 1], [0.5, 0.25, 1.0], 3)
    s = graph.coupling().toarray()
    np.testing.assert_allclose(s, [[0, 0.5, 0], [0.5, 0, 1.25], [0, 1.25, 0]])
    assert graph.n == 3 and graph.n_edges == 3


@pytest.mark.parametrize("field, value", [("gamma", -1.0), ("lam", float("nan")), ("n_neighbors", 0),
                                          ("bandwidth", 0.0), ("max_iter", 0), ("tol", -1e-3),
                                          ("affinity_update", -1), ("inner_sweeps", 0)])
def test_hyperparameter_validation(field, value):
    with pytest.raises(ValueError, match=field):
        Hyperparameters(**{field: value})
