import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform

from biconvex.assign import (
    Dendrogram,
    assign_clusters,
    average_linkage,
    centroid_distance_matrix,
    cut_dendrogram,
    default_min_size,
    gap_cut_height,
    parse_cut,
)
from biconvex.model import weighted_norm_sq


def _line(points):
    x = np.asarray(points, dtype=float)
    return np.abs(x[:, None] - x[None, :])


def _example_dendrogram():
    children = np.array([[0, 1], [2, 3], [4, 5], [6, 7]])
    return Dendrogram(children, np.array([0.1, 0.11, 0.12, 3.0]), np.array([2, 2, 3, 5]), 5)


def test_distance_matrix_examples(rng):
    np.testing.assert_array_equal(centroid_distance_matrix(np.ones((3, 2)), np.array([0.5, 0.5])),
                                  np.zeros((3, 3)))
    d = centroid_distance_matrix(np.array([[0.0], [1.0]]), np.array([1.0]), 0.0)
    np.testing.assert_array_equal(d, [[0, 1], [1, 0]])
    mu = rng.standard_normal((4, 3))
    w = np.array([0.2, 0.5, 0.3])
    naive = np.array([[np.sqrt(weighted_norm_sq(mu[i] - mu[j], w, 0.4)) for j in range(4)]
                      for i in range(4)])
    np.testing.assert_allclose(centroid_distance_matrix(mu, w, 0.4), naive, atol=1e-12)


def test_upgma_two_points():
    dendro = average_linkage(_line([0, 3.5]))
    assert dendro.heights.tolist() == [3.5]


def test_upgma_equilateral_tie_break():
    dendro = average_linkage(np.ones((3, 3)) - np.eye(3))
    assert dendro.children.tolist() == [[0, 1], [2, 3]]
    assert dendro.heights.tolist() == [1.0, 1.0]


def test_upgma_line_example():
    dendro = average_linkage(_line([0, 1, 5]))
    assert dendro.children.tolist() == [[0, 1], [2, 3]]
    np.testing.assert_allclose(dendro.heights, [1.0, 4.5])
    assert dendro.sizes.tolist() == [2, 3]


@given(st.integers(0, 10_000), st.integers(2, 15))
def test_upgma_heights_match_scipy(seed, n):
    rng = np.random.Generator(np.random.PCG64(seed))
    dist = squareform(rng.uniform(0.1, 5.0, n * (n - 1) // 2))
    ours = average_linkage(dist)
    ref = linkage(squareform(dist), method="average")
    np.testing.assert_allclose(ours.heights, ref[:, 2], rtol=1e-12)
    np.testing.assert_array_equal(ours.sizes, ref[:, 3])


def test_upgma_rejects_bad_input():
    with pytest.raises(ValueError, match="non-finite"):
        average_linkage(np.array([[0, np.inf], [np.inf, 0]]))
    with pytest.raises(ValueError, match="square"):
        average_linkage(np.zeros((2, 3)))


def test_dendrogram_validation():
    with pytest.raises(ValueError, match="merges"):
        Dendrogram(np.array([[0, 1]]), np.array([1.0]), np.array([2]), 3)
    with pytest.raises(ValueError, match="nondecreasing"):
        Dendrogram(np.array([[0, 1], [2, 3]]), np.array([2.0, 1.0]), np.array([2, 3]), 3)


def test_fixed_k_extremes(rng):
    dendro = average_linkage(_line(rng.uniform(size=6)))
    assert np.all(cut_dendrogram(dendro, "k", n_clusters=1) == 0)
    assert sorted(cut_dendrogram(dendro, "k", n_clusters=6)) == list(range(6))
    with pytest.raises(ValueError, match="n_clusters"):
        cut_dendrogram(dendro, "k", n_clusters=7)


def test_gap_example():
    dendro = _example_dendrogram()
    labels = cut_dendrogram(dendro, "gap", min_size=1)
    assert labels.tolist() == [0, 0, 1, 1, 0]
    assert gap_cut_height(dendro) == pytest.approx(1.56)


def test_gap_absorbs_small_clusters():
    x = np.array([0.0, 0.1, 0.2, 0.3, 10.0, 10.1, 10.2, 5.2])
    dist = _line(x)
    dendro = average_linkage(dist)
    raw = cut_dendrogram(dendro, "gap", min_size=1)
    floored = cut_dendrogram(dendro, "gap", min_size=2, dist=dist)
    assert np.bincount(floored).min() >= 2
    assert floored[7] == floored[4]
    assert raw.max() >= floored.max()
    with pytest.raises(ValueError, match="distance matrix"):
        cut_dendrogram(dendro, "gap", min_size=2)


def test_gap_with_single_merge():
    assert cut_dendrogram(average_linkage(_line([0, 1])), "gap").tolist() == [0, 0]


def test_height_cut():
    dendro = _example_dendrogram()
    assert cut_dendrogram(dendro, "height", height=0.105).tolist() == [0, 0, 1, 2, 3]
    assert cut_dendrogram(dendro, "height", height=10).tolist() == [0] * 5
    with pytest.raises(ValueError):
        cut_dendrogram(dendro, "height")
    with pytest.raises(ValueError, match="unknown"):
        cut_dendrogram(dendro, "dynamic")


@given(st.integers(0, 10_000), st.integers(3, 20), st.floats(0.01, 100))
def test_cut_properties(seed, n, scale):
    rng = np.random.Generator(np.random.PCG64(seed))
    pts = rng.standard_normal((n, 2))
    dist = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    dendro = average_linkage(dist)
    scaled = average_linkage(scale * dist)
    for kwargs in ({"strategy": "gap", "min_size": 2}, {"strategy": "k", "n_clusters": 3}):
        a = cut_dendrogram(dendro, dist=dist, **kwargs)
        b = cut_dendrogram(scaled, dist=scale * dist, **kwargs)
        assert a.tolist() == b.tolist()
        assert np.bincount(a).sum() == n
        assert set(a.tolist()) == set(range(a.max() + 1))
    assert cut_dendrogram(dendro, "k", n_clusters=3).max() + 1 == 3
    h1, h2 = np.sort(rng.uniform(0, dendro.heights[-1], 2))
    fine = cut_dendrogram(dendro, "height", height=h1)
    coarse = cut_dendrogram(dendro, "height", height=h2)
    for c in np.unique(fine):
        assert len(np.unique(coarse[fine == c])) == 1


def test_parse_cut():
    assert parse_cut("gap") == {"strategy": "gap"}
    assert parse_cut("height=0.5") == {"strategy": "height", "height": 0.5}
    assert parse_cut(" k=3 ") == {"strategy": "k", "n_clusters": 3}
    for bad in ("k", "size=3", "height:1"):
        with pytest.raises(ValueError):
            parse_cut(bad)


def test_default_min_size():
    assert default_min_size(10) == 2
    assert default_min_size(1000) == 20


def test_assign_clusters_separated_groups(rng):
    mu = np.vstack([rng.normal(0, 0.01, (10, 2)), rng.normal(5, 0.01, (10, 2))])
    labels, dendro, dist = assign_clusters(mu, np.array([0.5, 0.5]), 0.2)
    assert labels.tolist() == [0] * 10 + [1] * 10
    assert dendro.n_leaves == 20 and dist.shape == (20, 20)
    euclid, _, _ = assign_clusters(mu, metric="euclidean", cut="k=2")
    assert euclid.tolist() == labels.tolist()
    with pytest.raises(ValueError, match="metric"):
        assign_clusters(mu, metric="cosine")


def test_dendrogram_csv_round_trip(tmp_path, rng):
    dendro = average_linkage(_line(rng.uniform(size=7)))
    dendro.to_csv(tmp_path / "d.csv")
    back = Dendrogram.from_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.children, dendro.children)
    np.testing.assert_array_equal(back.heights, dendro.heights)
    assert dendro.to_linkage().shape == (6, 4)
